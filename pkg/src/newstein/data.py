"""Synthetic spiked-covariance data, file loaders and standardisation."""
from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .errors import ParseError
from .family import get_family, sigmoid
from .glm import Dataset


@dataclass
class SpikedModelSpec:
    """Gaussian design with covariance sigma2 I + sum_i theta_i u_i u_i^T.

    ``theta`` defaults to r values log-spaced over [10, 100], largest first;
    ``beta_true`` defaults to a random unit vector.
    """

    n: int = 50_000
    p: int = 100
    r: int = 3
    theta: Optional[Sequence[float]] = None
    sigma2: float = 1.0
    seed: int = 0
    family: str = "logistic"
    beta_true: Optional[Sequence[float]] = None

    def __post_init__(self):
        if self.theta is None:
            self.theta = np.logspace(1, 2, self.r)[::-1].tolist() if self.r else []
        self.theta = [float(v) for v in self.theta]
        self.validate()

    def validate(self):
        if self.n < 1 or self.p < 1:
            raise ValueError("n and p must be positive")
        if not 0 <= self.r < self.p:
            raise ValueError(f"need 0 <= r < p, got r={self.r}, p={self.p}")
        if len(self.theta) != self.r:
            raise ValueError(f"theta has {len(self.theta)} entries, expected r = {self.r}")
        th = np.asarray(self.theta)
        if np.any(th <= 0) or np.any(np.diff(th) > 0):
            raise ValueError("theta must be positive and in descending order")
        if not self.sigma2 > 0:
            raise ValueError("sigma2 must be positive")
        if self.beta_true is not None and len(self.beta_true) != self.p:
            raise ValueError("beta_true must have length p")
        get_family(self.family)

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["beta_true"] is not None:
            d["beta_true"] = [float(v) for v in d["beta_true"]]
        return d


def random_orthogonal(p: int, rng) -> np.ndarray:
    """Haar-distributed orthogonal matrix (QR with sign-corrected R diagonal)."""
    Qm, R = np.linalg.qr(rng.standard_normal((p, p)))
    d = np.sign(np.diag(R))
    d[d == 0] = 1.0
    return Qm * d


def spiked_eigenvalues(spec: SpikedModelSpec) -> np.ndarray:
    lam = np.full(spec.p, float(spec.sigma2))
    lam[: spec.r] += np.asarray(spec.theta, dtype=float)
    return lam


def spiked_covariance(spec: SpikedModelSpec):
    """Return (M, lam, Sigma) exactly as :func:`generate_spiked` draws them."""
    rng = np.random.default_rng(spec.seed)
    M = random_orthogonal(spec.p, rng)
    lam = spiked_eigenvalues(spec)
    return M, lam, (M * lam) @ M.T


def generate_spiked(spec: SpikedModelSpec) -> Dataset:
    spec.validate()
    fam = get_family(spec.family)
    rng = np.random.default_rng(spec.seed)
    M = random_orthogonal(spec.p, rng)
    lam = spiked_eigenvalues(spec)
    if spec.beta_true is None:
        b = rng.standard_normal(spec.p)
        beta = b / np.linalg.norm(b)
    else:
        beta = np.asarray(spec.beta_true, dtype=float)
    X = (rng.standard_normal((spec.n, spec.p)) * np.sqrt(lam)) @ M.T
    eta = X @ beta
    if fam.name == "logistic":
        y = (rng.random(spec.n) < sigmoid(eta)).astype(float)
    elif fam.name == "least_squares":
        y = 2.0 * eta + rng.standard_normal(spec.n)
    else:
        y = rng.poisson(np.exp(np.minimum(eta, 30.0))).astype(float)
    meta = {
        "n": spec.n,
        "p": spec.p,
        "family": fam.name,
        "generator": spec.to_dict(),
        "beta_true": beta.tolist(),
    }
    return Dataset(X, y, meta=meta)


# ---------------------------------------------------------------- loading


def _to_float(tok: str, line: int) -> float:
    try:
        v = float(tok)
    except ValueError:
        raise ParseError(f"non-numeric field {tok.strip()!r}", line) from None
    if not math.isfinite(v):
        raise ParseError(f"non-finite field {tok.strip()!r}", line)
    return v


def _is_number(tok: str) -> bool:
    try:
        float(tok)
    except ValueError:
        return False
    return True


def map_binary_labels(y, positive_class=None):
    """Map a two-valued label vector onto {0, 1}.

    Accepts {0,1}, {-1,+1} and {1,2}; any other label set needs
    ``positive_class`` (e.g. class 2 vs rest for Covertype).
    """
    y = np.asarray(y, dtype=float)
    if positive_class is not None:
        return (y == float(positive_class)).astype(float), f"{positive_class} vs rest"
    vals = set(np.unique(y).tolist())
    if vals <= {0.0, 1.0}:
        return y, "identity"
    if vals <= {-1.0, 1.0}:
        return (y + 1.0) / 2.0, "{-1,+1} -> {0,1}"
    if vals <= {1.0, 2.0}:
        return y - 1.0, "{1,2} -> {0,1}"
    raise ValueError(
        f"cannot map labels {sorted(vals)[:5]} to {{0, 1}}; pass positive_class"
    )


def _read_csv(path, label_column, header):
    rows = []
    names = None
    width = None
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, fields in enumerate(csv.reader(fh), start=1):
            if not fields or all(not f.strip() for f in fields):
                continue
            if names is None and not rows and header is not False:
                numeric = [_is_number(f) for f in fields]
                if header or not any(numeric):
                    names = [f.strip() for f in fields]
                    width = len(fields)
                    continue
            if width is None:
                width = len(fields)
            elif len(fields) != width:
                raise ParseError(f"expected {width} columns, found {len(fields)}", lineno)
            rows.append([_to_float(f, lineno) for f in fields])
    if not rows:
        raise ParseError("empty file: no data rows")
    A = np.array(rows)
    if isinstance(label_column, str):
        if names is None or label_column not in names:
            raise ValueError(f"label column {label_column!r} not found in header")
        j = names.index(label_column)
    else:
        j = int(label_column)
        if not -width <= j < width:
            raise ValueError(f"label column {j} out of range for {width} columns")
        j %= width
    keep = [k for k in range(width) if k != j]
    if not keep:
        raise ParseError("file has no feature columns")
    feat_names = [names[k] for k in keep] if names is not None else None
    return A[:, keep], A[:, j], feat_names


def _read_libsvm(path, n_features):
    labels, entries = [], []
    maxidx = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            toks = line.split()
            labels.append(_to_float(toks[0], lineno))
            row = {}
            for tok in toks[1:]:
                idx, sep, val = tok.partition(":")
                if not sep:
                    raise ParseError(f"malformed feature {tok!r} (expected idx:val)", lineno)
                try:
                    k = int(idx)
                except ValueError:
                    raise ParseError(f"non-integer feature index {idx!r}", lineno) from None
                if k < 1:
                    raise ParseError(f"feature index {k} must be >= 1", lineno)
                row[k] = _to_float(val, lineno)
                maxidx = max(maxidx, k)
            entries.append(row)
    if not labels:
        raise ParseError("empty file: no data rows")
    p = n_features or maxidx
    if maxidx > p:
        raise ParseError(f"feature index {maxidx} exceeds n_features = {p}")
    X = np.zeros((len(labels), p))
    for i, row in enumerate(entries):
        for k, v in row.items():
            X[i, k - 1] = v
    return X, np.array(labels), None


def load_dataset(path, format="csv", label_column: Union[int, str] = -1,
                 family="logistic", header=None, positive_class=None,
                 n_features=None) -> Dataset:
    """Read a CSV or libsvm file into a dense :class:`Dataset`.

    ``header=None`` auto-detects a header from an all-text first row.  For
    the logistic family labels are mapped to {0, 1}.
    """
    fam = get_family(family)
    path = Path(path)
    if format == "csv":
        X, y, names = _read_csv(path, label_column, header)
    elif format == "libsvm":
        X, y, names = _read_libsvm(path, n_features)
    else:
        raise ValueError(f"unknown format {format!r}")
    mapping = None
    if fam.binary_response:
        y, mapping = map_binary_labels(y, positive_class)
    meta = {"source": str(path), "format": format, "family": fam.name,
            "n": X.shape[0], "p": X.shape[1], "label_mapping": mapping}
    return Dataset(X, y, feature_names=names, meta=meta)


# ---------------------------------------------------------- standardising


@dataclass(frozen=True)
class Standardization:
    mean: np.ndarray
    scale: np.ndarray
    constant_columns: tuple = field(default=())

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "scale": self.scale.tolist(),
                "constant_columns": list(self.constant_columns)}

    def apply(self, data: Dataset) -> Dataset:
        return Dataset((data.X - self.mean) / self.scale, data.y,
                       data.feature_names, dict(data.meta, standardization=self.to_dict()))


def standardize(data: Dataset):
    """Centre each column and scale it to unit (population) standard deviation."""
    if data.n < 2:
        raise ValueError("standardize needs at least two rows")
    mean = data.X.mean(axis=0)
    centred = data.X - mean
    std = np.sqrt(np.mean(centred * centred, axis=0))
    const = np.flatnonzero(std <= 1e-12 * np.maximum(1.0, np.abs(mean)))
    scale = std.copy()
    scale[const] = 1.0
    if const.size:
        warnings.warn(f"zero-variance columns {const.tolist()} centred but not scaled",
                      RuntimeWarning, stacklevel=2)
    params = Standardization(mean, scale, tuple(int(c) for c in const))
    out = Dataset(centred / scale, data.y, data.feature_names,
                  dict(data.meta, standardization=params.to_dict()))
    return out, params


# -------------------------------------------------------------- persisting


def metadata_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".meta.json")


def save_dataset(data: Dataset, path) -> Path:
    """Write features and label (last column, named ``y``) plus a JSON sidecar.

    Values are written with 17 significant digits so a reload is bit-exact.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = list(data.feature_names) if data.feature_names else [
        f"x{j + 1}" for j in range(data.p)
    ]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(names + ["y"]) + "\n")
        np.savetxt(fh, np.column_stack([data.X, data.y]), fmt="%.17g", delimiter=",")
    meta = dict(data.meta, n=data.n, p=data.p)
    with open(metadata_path(path), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def load_metadata(path) -> dict:
    mp = metadata_path(path)
    if not mp.exists():
        return {}
    with open(mp, encoding="utf-8") as fh:
        return json.load(fh)
