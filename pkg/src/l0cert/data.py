"""Synthetic instance generation, dataset loading, and preprocessing.

The synthetic protocol: rows drawn from a zero-mean Gaussian with AR(1)
correlation sigma^|j-l| (sampled through the closed-form recursion, i.e.
the Cholesky factor applied in O(p) per row), a ground-truth coefficient
vector with equally spaced unit entries, responses with Gaussian noise
scaled by the signal-to-noise ratio for regression, or Bernoulli +/-1
labels with the noisy linear predictor as (clamped) success probability
for classification.
"""

import re
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from .errors import DataFormatError, InvalidInputError
from .model import LossKind, ProblemInstance

__all__ = [
    "SyntheticParams",
    "generate_synthetic",
    "load_dataset",
    "standardize",
    "StandardizeTransform",
    "write_instance",
    "read_instance",
]

DEFAULT_M = 2.0
DEFAULT_LAMBDA2 = 1.0


@dataclass
class SyntheticParams:
    n: int
    p: int
    k_true: int
    sigma: float = 0.5
    snr: float = 5.0
    task: str = "regression"
    seed: int = 0
    # the noise recipe reads N(0, s) with s = ||X beta*|| / SNR; "variance"
    # takes s as the variance as printed, "std" as the standard deviation
    snr_scale: str = "variance"

    def __post_init__(self):
        if self.n < 1 or self.p < 1:
            raise InvalidInputError("n and p must be positive")
        if not (1 <= self.k_true <= self.p):
            raise InvalidInputError("k_true must satisfy 1 <= k_true <= p")
        if not (0.0 <= self.sigma < 1.0):
            raise InvalidInputError("sigma must lie in [0, 1)")
        if self.snr <= 0:
            raise InvalidInputError("snr must be positive")
        if self.task not in ("regression", "classification"):
            raise InvalidInputError("task must be 'regression' or 'classification'")
        if self.snr_scale not in ("variance", "std"):
            raise InvalidInputError("snr_scale must be 'variance' or 'std'")


def true_support(p: int, k_true: int) -> np.ndarray:
    """Equally spaced support: 1-indexed positions j with j mod (p/k) == 0,
    generalized to round(j*p/k) when p is not divisible by k.  Returns
    0-based indices."""
    if p % k_true == 0:
        step = p // k_true
        pos = np.arange(1, k_true + 1) * step
    else:
        pos = np.unique(np.round(np.arange(1, k_true + 1) * p / k_true).astype(np.int64))
        pos = np.clip(pos, 1, p)
    return pos - 1


def _ar1_rows(n: int, p: int, sigma: float, rng: np.random.Generator) -> np.ndarray:
    W = rng.standard_normal((n, p))
    if sigma == 0.0:
        return W
    X = np.empty((n, p))
    X[:, 0] = W[:, 0]
    c = np.sqrt(1.0 - sigma * sigma)
    for j in range(1, p):
        X[:, j] = sigma * X[:, j - 1] + c * W[:, j]
    return X


def generate_synthetic(params: SyntheticParams) -> ProblemInstance:
    """Deterministic synthetic instance for the given seed, with the
    ground-truth coefficients attached.  Cardinality defaults to k_true and
    the box/ridge constants to the benchmark defaults (M=2, lambda2=1)."""
    rng = np.random.default_rng(params.seed)
    X = _ar1_rows(params.n, params.p, params.sigma, rng)
    beta_true = np.zeros(params.p)
    beta_true[true_support(params.p, params.k_true)] = 1.0
    signal = X @ beta_true
    scale = np.linalg.norm(signal) / params.snr
    noise_std = np.sqrt(scale) if params.snr_scale == "variance" else scale
    eps = rng.normal(0.0, noise_std, params.n) if noise_std > 0 else np.zeros(params.n)
    if params.task == "regression":
        y = signal + eps
        loss = LossKind.SQUARED_ERROR
    else:
        prob = np.clip(signal + eps, 0.0, 1.0)
        y = np.where(rng.random(params.n) < prob, 1.0, -1.0)
        loss = LossKind.LOGISTIC
    return ProblemInstance(
        X=X,
        y=y,
        loss=loss,
        k=params.k_true,
        M=DEFAULT_M,
        lambda2=DEFAULT_LAMBDA2,
        beta_true=beta_true,
    )


def _split_fields(line: str) -> List[str]:
    return line.split(",") if "," in line else line.split()


def load_dataset(path, fmt: str = "delimited", label_column: str = "last", n_features: Optional[int] = None):
    """Read (X, y) from a text file.

    ``delimited``: one row per line, comma- or whitespace-separated, label in
    the last (or first) column.  ``sparse``: one sample per line as
    ``label idx:val ...`` with 1-indexed feature ids.
    """
    if fmt not in ("delimited", "sparse"):
        raise InvalidInputError(f"unknown dataset format {fmt!r}")
    if label_column not in ("last", "first"):
        raise InvalidInputError("label_column must be 'last' or 'first'")
    rows = []
    labels = []
    if fmt == "delimited":
        width = None
        with open(path) as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.strip()
                if not line or line.startswith("#"):
                    continue
                fields = _split_fields(line)
                if width is None:
                    width = len(fields)
                    if width < 2:
                        raise DataFormatError(
                            f"line {lineno}: need at least one feature and a label", line=lineno
                        )
                elif len(fields) != width:
                    raise DataFormatError(
                        f"line {lineno}: expected {width} fields, found {len(fields)}",
                        line=lineno,
                    )
                try:
                    vals = [float(v) for v in fields]
                except ValueError as exc:
                    raise DataFormatError(f"line {lineno}: {exc}", line=lineno) from None
                if label_column == "last":
                    rows.append(vals[:-1])
                    labels.append(vals[-1])
                else:
                    rows.append(vals[1:])
                    labels.append(vals[0])
        if not rows:
            raise DataFormatError("file contains no data rows")
        return np.asarray(rows, dtype=np.float64), np.asarray(labels, dtype=np.float64)

    entries = []
    max_idx = 0
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            fields = line.split()
            try:
                label = float(fields[0])
                pairs = []
                for tok in fields[1:]:
                    idx_s, val_s = tok.split(":", 1)
                    idx = int(idx_s)
                    if idx < 1:
                        raise ValueError(f"feature index {idx} is not 1-based")
                    pairs.append((idx, float(val_s)))
            except (ValueError, IndexError) as exc:
                raise DataFormatError(f"line {lineno}: {exc}", line=lineno) from None
            if pairs:
                max_idx = max(max_idx, max(i for i, _ in pairs))
            entries.append((label, pairs))
    if not entries:
        raise DataFormatError("file contains no data rows")
    p = n_features if n_features is not None else max_idx
    if max_idx > p:
        raise DataFormatError(f"feature index {max_idx} exceeds declared width {p}")
    X = np.zeros((len(entries), p))
    y = np.empty(len(entries))
    for i, (label, pairs) in enumerate(entries):
        y[i] = label
        for idx, val in pairs:
            X[i, idx - 1] = val
    return X, y


@dataclass
class StandardizeTransform:
    """Record of the centering/scaling applied, for coefficient back-mapping."""

    kept: np.ndarray      # original column indices that survived
    dropped: np.ndarray   # constant columns that were removed
    means: np.ndarray     # per kept column
    norms: np.ndarray     # centered Euclidean norm per kept column

    def map_coefficients(self, beta_std: np.ndarray) -> Tuple[np.ndarray, float]:
        """Coefficients on the original scale (zeros at dropped columns) plus
        the intercept shift induced by centering."""
        beta_std = np.asarray(beta_std, dtype=np.float64)
        p_orig = self.kept.size + self.dropped.size
        beta = np.zeros(p_orig)
        scaled = beta_std / self.norms
        beta[self.kept] = scaled
        return beta, float(-(self.means @ scaled))


def standardize(X) -> Tuple[np.ndarray, StandardizeTransform]:
    """Drop constant columns, center each remaining column to mean zero, and
    scale it to unit Euclidean norm."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise InvalidInputError("standardize needs a 2-d matrix with n >= 2")
    means = X.mean(axis=0)
    centered = X - means
    norms = np.linalg.norm(centered, axis=0)
    scale = np.abs(X).max(axis=0)
    keep = norms > 1e-12 * np.maximum(1.0, scale)
    if not keep.any():
        raise InvalidInputError("all columns are constant")
    kept = np.nonzero(keep)[0]
    dropped = np.nonzero(~keep)[0]
    out = centered[:, kept] / norms[kept]
    return out, StandardizeTransform(
        kept=kept, dropped=dropped, means=means[kept], norms=norms[kept]
    )


_LOSS_BY_NAME = {kind.value: kind for kind in LossKind}


def write_instance(path, instance: ProblemInstance) -> None:
    """Self-contained text format: key/value header, then one sample per
    line with the label last.  Ground-truth support is recorded 1-indexed."""
    n, p = instance.n, instance.p
    with open(path, "w") as fh:
        fh.write("format l0cert-instance 1\n")
        fh.write(f"n {n}\n")
        fh.write(f"p {p}\n")
        fh.write(f"loss {instance.loss.value}\n")
        fh.write(f"k {instance.k}\n")
        fh.write(f"M {instance.M!r}\n")
        fh.write(f"lambda2 {instance.lambda2!r}\n")
        if instance.beta_true is not None:
            support = np.nonzero(instance.beta_true)[0] + 1
            fh.write("support_true " + ",".join(str(int(j)) for j in support) + "\n")
        fh.write("data\n")
        for i in range(n):
            row = " ".join(repr(float(v)) for v in instance.X[i])
            fh.write(f"{row} {instance.y[i]!r}\n")


def read_instance(path) -> ProblemInstance:
    header = {}
    rows = []
    in_data = False
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if not in_data:
                if line == "data":
                    in_data = True
                    continue
                m = re.match(r"^(\S+)\s+(.*)$", line)
                if not m:
                    raise DataFormatError(f"line {lineno}: malformed header line", line=lineno)
                header[m.group(1)] = m.group(2)
                continue
            fields = line.split()
            try:
                rows.append([float(v) for v in fields])
            except ValueError as exc:
                raise DataFormatError(f"line {lineno}: {exc}", line=lineno) from None
    for key in ("n", "p", "loss", "k", "M", "lambda2"):
        if key not in header:
            raise DataFormatError(f"missing header field {key!r}")
    n, p = int(header["n"]), int(header["p"])
    loss_name = header["loss"]
    if loss_name not in _LOSS_BY_NAME:
        raise DataFormatError(f"unknown loss {loss_name!r}")
    if len(rows) != n:
        raise DataFormatError(f"header declares n={n} but found {len(rows)} data rows")
    data = np.asarray(rows, dtype=np.float64)
    if data.shape[1] != p + 1:
        raise DataFormatError(f"rows must have p+1={p + 1} fields, found {data.shape[1]}")
    beta_true = None
    if "support_true" in header and header["support_true"]:
        support = np.asarray([int(t) for t in header["support_true"].split(",")], dtype=np.int64)
        beta_true = np.zeros(p)
        beta_true[support - 1] = 1.0
    return ProblemInstance(
        X=data[:, :p],
        y=data[:, p],
        loss=_LOSS_BY_NAME[loss_name],
        k=int(header["k"]),
        M=float(header["M"]),
        lambda2=float(header["lambda2"]),
        beta_true=beta_true,
    )
