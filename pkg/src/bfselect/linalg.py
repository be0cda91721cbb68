"""Design-matrix primitives: standardization, coefficients of determination,
rank-one updates, and Gram-matrix eigenvalue floors.

The intercept is never carried as a column.  Every projection here acts on
once-centered data, which makes the intercept-only projection implicit and
keeps all model subspaces orthogonal to the constant vector.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg

from .errors import (
    CollinearColumnError,
    ConstantColumnError,
    DegenerateResponseError,
    InputError,
    SingularModelError,
)

# Relative rank threshold for pivoted QR, against the largest column norm.
RANK_RTOL = 1e-8

ModelIndex = tuple[int, ...]


def validate_model(model: Sequence[int], p: int, n: int | None = None) -> ModelIndex:
    """Normalize a model to a sorted tuple of 1-based column indices."""
    idx = tuple(int(i) for i in model)
    if any(i < 1 or i > p for i in idx):
        raise InputError(f"model indices must lie in [1, {p}], got {idx}")
    if len(set(idx)) != len(idx):
        raise InputError(f"model indices must be distinct, got {idx}")
    idx = tuple(sorted(idx))
    if n is not None and len(idx) > min(p, n - 3):
        raise InputError(
            f"model size {len(idx)} exceeds the allowed maximum "
            f"min(p, n-3) = {min(p, n - 3)}")
    return idx


class Dataset:
    """A response vector together with an n-by-p design matrix.

    Centered copies of the columns and the response are precomputed once so
    repeated model fits never re-center.  `standardized` records whether the
    columns have been centered and rescaled to squared norm n.
    """

    def __init__(self, y, X, standardized: bool = False):
        y = np.asarray(y, dtype=float).reshape(-1)
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        if X.ndim != 2:
            raise InputError(f"design must be 2-dimensional, got shape {X.shape}")
        n, p = X.shape
        if y.shape[0] != n:
            raise InputError(f"length of y ({y.shape[0]}) does not match rows of X ({n})")
        if n < 3:
            raise InputError(f"need at least 3 observations, got {n}")
        if not np.all(np.isfinite(X)) or not np.all(np.isfinite(y)):
            raise InputError("design and response must be finite")
        self.y = y
        self.X = X
        self.standardized = bool(standardized)
        self.n = n
        self.p = p
        self._Xc = X - X.mean(axis=0) if p else X.copy()
        self._yc = y - y.mean()
        self._tss = float(self._yc @ self._yc)

    @property
    def centered_design(self) -> np.ndarray:
        return self._Xc

    @property
    def centered_response(self) -> np.ndarray:
        return self._yc

    @property
    def total_ss(self) -> float:
        return self._tss

    def columns(self, model: Sequence[int]) -> np.ndarray:
        """Centered columns for a 1-based model index."""
        cols = np.asarray([i - 1 for i in model], dtype=int)
        return self._Xc[:, cols]

    def __repr__(self):
        return f"Dataset(n={self.n}, p={self.p}, standardized={self.standardized})"


def standardize(dataset: Dataset) -> Dataset:
    """Center each column and rescale it to squared norm n.

    Idempotent up to floating point.  Raises ConstantColumnError, naming the
    offending 1-based column, when a column has no variation to rescale.
    """
    n = dataset.n
    Xc = dataset.centered_design
    norms = np.linalg.norm(Xc, axis=0)
    raw_norms = np.linalg.norm(dataset.X, axis=0)
    floor = 1e-12 * np.maximum(raw_norms, np.sqrt(n))
    for j in np.nonzero(norms <= floor)[0]:
        raise ConstantColumnError(int(j) + 1)
    Xs = Xc * (np.sqrt(n) / norms)
    return Dataset(dataset.y, Xs, standardized=True)


@dataclass(frozen=True)
class RSquared:
    """Proportion of centered response variation explained by a model."""

    value: float
    model_size: int

    def __post_init__(self):
        if not 0.0 <= self.value <= 1.0:
            raise InputError(f"R^2 must lie in [0, 1], got {self.value}")

    @property
    def saturated(self) -> bool:
        return self.value == 1.0

    def __float__(self) -> float:
        return self.value


def _require_standardized(dataset: Dataset):
    if not dataset.standardized:
        raise InputError("dataset must be standardized first (see standardize())")


def _check_response(dataset: Dataset):
    if dataset.total_ss <= 1e-24 * max(1.0, float(dataset.y @ dataset.y)):
        raise DegenerateResponseError("response is constant; R^2 is undefined")


def model_basis(dataset: Dataset, model: Sequence[int]) -> np.ndarray:
    """Orthonormal basis for the span of a model's centered columns.

    Rank is detected from a pivoted QR using a relative threshold against the
    largest column norm; a deficient model raises SingularModelError.
    """
    model = validate_model(model, dataset.p)
    if not model:
        return np.zeros((dataset.n, 0))
    cols = dataset.columns(model)
    q, r, _ = scipy.linalg.qr(cols, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    tol = RANK_RTOL * np.linalg.norm(cols, axis=0).max()
    rank = int(np.sum(diag > tol))
    if rank < len(model):
        raise SingularModelError(
            f"model {model} is rank deficient (rank {rank} < {len(model)})")
    return q


def r_squared(dataset: Dataset, model: Sequence[int]) -> RSquared:
    """R^2 of a model, intercept included implicitly via centering.

    Computed from the explicit residual vector rather than by subtracting
    projections, so a perfect fit lands exactly at 1.0.
    """
    _require_standardized(dataset)
    _check_response(dataset)
    model = validate_model(model, dataset.p, dataset.n)
    if not model:
        return RSquared(0.0, 0)
    q = model_basis(dataset, model)
    yc = dataset.centered_response
    resid = yc - q @ (q.T @ yc)
    rss = float(resid @ resid)
    value = 1.0 - rss / dataset.total_ss
    return RSquared(min(1.0, max(0.0, value)), len(model))


def incremental_rss(dataset: Dataset, model: Sequence[int], k: int,
                    basis: np.ndarray | None = None) -> RSquared:
    """R^2 of `model + {k}` via a single rank-one update of the fitted span.

    Pass `basis` (from model_basis) to reuse an existing factorization when
    scanning many candidate columns against one base model.
    """
    _require_standardized(dataset)
    _check_response(dataset)
    model = validate_model(model, dataset.p)
    if k in model:
        raise InputError(f"column {k} is already in the model {model}")
    validate_model(model + (k,), dataset.p, dataset.n)
    q = model_basis(dataset, model) if basis is None else basis
    xk = dataset.columns((k,))[:, 0]
    resid = xk - q @ (q.T @ xk) if q.shape[1] else xk.copy()
    norm = np.linalg.norm(resid)
    if norm <= RANK_RTOL * max(np.linalg.norm(xk), 1.0):
        raise CollinearColumnError(
            f"column {k} lies in the span of model {model}")
    direction = resid / norm
    yc = dataset.centered_response
    base = r_squared(dataset, model).value if model else 0.0
    gain = float(direction @ yc) ** 2 / dataset.total_ss
    return RSquared(min(1.0, max(0.0, base + gain)), len(model) + 1)


def min_eigen(dataset: Dataset, model: Sequence[int]) -> float:
    """Smallest eigenvalue of (1/n) X_A' X_A for the standardized design.

    Clamped at zero: tiny negative values from symmetric eigensolves on
    near-singular Grams are reported as 0.
    """
    _require_standardized(dataset)
    model = validate_model(model, dataset.p)
    if not model:
        raise InputError("min_eigen needs a non-empty model")
    cols = dataset.X[:, [i - 1 for i in model]]
    gram = cols.T @ cols / dataset.n
    smallest = float(np.linalg.eigvalsh(gram)[0])
    return max(0.0, smallest)
