"""True covariance models and Gaussian sampling.

Three parametric families are provided, plus an escape hatch for explicit
matrices:

* ``PolyDecay(rho, alpha)``: unit diagonal, ``sigma_ij = rho * |i-j|**-(alpha+1)``.
* ``ArDecay(rho)``: ``sigma_ij = rho**|i-j|``.
* ``BandedUniform(k0, offdiag)``: identity plus ``offdiag`` on all bands
  ``|i-j| <= k0-1``.  Note the diagonal is ``1 + offdiag``; pass
  ``unit_diagonal=True`` to force ones instead.
* ``Explicit(matrix)``: any symmetric matrix with positive diagonal.

Sampling is deterministic given ``(sigma, n, seed)`` and uses a counter-based
generator so that parallel replication order can never change the draws.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from .errors import DataError, NumericalError, ParameterError

__all__ = [
    "PolyDecay",
    "ArDecay",
    "BandedUniform",
    "Explicit",
    "CovModel",
    "Dataset",
    "build_sigma",
    "sample_dataset",
    "model_bandwidth",
]

Matrix = NDArray[np.float64]


@dataclass(frozen=True)
class PolyDecay:
    """Polynomially decaying covariances, ``sigma_ij = rho * |i-j|**-(alpha+1)``."""

    rho: float
    alpha: float
    p: int

    def __post_init__(self) -> None:
        if not 0 <= self.rho < 1:
            raise ParameterError(f"PolyDecay requires 0 <= rho < 1, got {self.rho}")
        if self.alpha <= 0:
            raise ParameterError(f"PolyDecay requires alpha > 0, got {self.alpha}")
        _check_dim(self.p)


@dataclass(frozen=True)
class ArDecay:
    """Autoregressive-type covariances, ``sigma_ij = rho**|i-j|``."""

    rho: float
    p: int

    def __post_init__(self) -> None:
        if not abs(self.rho) < 1:
            raise ParameterError(f"ArDecay requires |rho| < 1, got {self.rho}")
        _check_dim(self.p)


@dataclass(frozen=True)
class BandedUniform:
    """Exactly banded covariance: identity plus a constant band of width k0."""

    k0: int
    offdiag: float
    p: int
    unit_diagonal: bool = False

    def __post_init__(self) -> None:
        _check_dim(self.p)
        if not 1 <= self.k0 <= self.p:
            raise ParameterError(
                f"BandedUniform requires 1 <= k0 <= p, got k0={self.k0}, p={self.p}"
            )


@dataclass(frozen=True)
class Explicit:
    """A user-supplied symmetric covariance matrix."""

    matrix: Matrix = field(repr=False)
    p: int = 0

    def __post_init__(self) -> None:
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ParameterError(f"Explicit matrix must be square, got shape {m.shape}")
        if not np.array_equal(m, m.T):
            raise ParameterError("Explicit matrix must be symmetric")
        if not np.all(np.isfinite(m)):
            raise ParameterError("Explicit matrix has non-finite entries")
        if np.any(np.diag(m) <= 0):
            raise ParameterError("Explicit matrix must have positive diagonal")
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "p", m.shape[0])


CovModel = PolyDecay | ArDecay | BandedUniform | Explicit


@dataclass(frozen=True)
class Dataset:
    """An n x p sample of i.i.d. rows, together with the seed that produced it.

    ``seed`` is 0 for ingested (non-simulated) data.
    """

    rows: Matrix = field(repr=False)
    seed: int = 0

    def __post_init__(self) -> None:
        rows = np.asarray(self.rows, dtype=np.float64)
        if rows.ndim != 2:
            raise DataError(f"Dataset rows must be 2-dimensional, got shape {rows.shape}")
        if rows.shape[0] < 3:
            raise DataError(f"Dataset needs n >= 3 rows, got n={rows.shape[0]}")
        object.__setattr__(self, "rows", rows)

    @property
    def n(self) -> int:
        return self.rows.shape[0]

    @property
    def p(self) -> int:
        return self.rows.shape[1]


def _check_dim(p: int) -> None:
    if not (isinstance(p, (int, np.integer)) and p >= 1):
        raise ParameterError(f"dimension p must be a positive integer, got {p!r}")


def build_sigma(model: CovModel) -> Matrix:
    """Construct the true covariance matrix for ``model``.

    The output is exactly symmetric (built from |i-j| only, or validated as
    such for :class:`Explicit`).
    """
    if isinstance(model, Explicit):
        return model.matrix.copy()
    p = model.p
    d = np.abs(np.subtract.outer(np.arange(p), np.arange(p)))
    if isinstance(model, PolyDecay):
        with np.errstate(divide="ignore"):
            sigma = model.rho * np.where(d > 0, d, 1).astype(np.float64) ** (-(model.alpha + 1.0))
        np.fill_diagonal(sigma, 1.0)
        return sigma
    if isinstance(model, ArDecay):
        return np.float64(model.rho) ** d
    if isinstance(model, BandedUniform):
        sigma = np.where(d <= model.k0 - 1, model.offdiag, 0.0)
        diag = 1.0 if model.unit_diagonal else 1.0 + model.offdiag
        np.fill_diagonal(sigma, diag)
        return sigma
    raise ParameterError(f"unknown covariance model: {model!r}")


def model_bandwidth(model: CovModel) -> int | None:
    """Return the exact bandwidth of ``model`` if it has one, else ``None``.

    The bandwidth k0 is the smallest k with ``sigma_ij = 0`` whenever
    ``|i-j| >= k``.  Decay models have no exact band.
    """
    if isinstance(model, BandedUniform):
        return model.k0
    if isinstance(model, Explicit):
        m = model.matrix
        p = m.shape[0]
        for k in range(p, 0, -1):
            # band k-1 is the outermost that may be nonzero
            if np.any(np.diagonal(m, offset=k - 1) != 0.0):
                return k
        return 1  # zero off-diagonals everywhere; degenerate but banded at 1
    return None


def cholesky_factor(sigma: Matrix) -> Matrix:
    """Lower-triangular Cholesky factor of ``sigma``, with a single jitter retry.

    If plain factorization fails, one attempt is made after adding
    ``1e-10 * trace(sigma)/p`` to the diagonal; a second failure raises
    :class:`NumericalError`.  Intended to be computed once per experiment and
    reused across replications.
    """
    sigma = np.asarray(sigma, dtype=np.float64)
    try:
        return np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        pass
    jitter = 1e-10 * float(np.trace(sigma)) / sigma.shape[0]
    try:
        return np.linalg.cholesky(sigma + jitter * np.eye(sigma.shape[0]))
    except np.linalg.LinAlgError:
        raise NumericalError(
            "covariance matrix is not positive definite (jitter retry failed)"
        ) from None


def _rng_for_seed(seed: int) -> np.random.Generator:
    # Philox is counter-based: streams for distinct seeds are independent and
    # the draw order is fixed regardless of how replications are scheduled.
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


def _draw_rows(chol: Matrix, n: int, seed: int) -> Matrix:
    z = _rng_for_seed(seed).standard_normal((n, chol.shape[0]))
    return z @ chol.T


def sample_dataset(sigma: Matrix, n: int, seed: int, chol: Matrix | None = None) -> Dataset:
    """Draw ``n`` i.i.d. rows from N(0, sigma), deterministically in ``seed``.

    ``chol`` may carry a precomputed lower Cholesky factor of ``sigma`` to
    avoid refactorizing inside replication loops.
    """
    if n < 3:
        raise DataError(f"need n >= 3 observations, got n={n}")
    sigma = np.asarray(sigma, dtype=np.float64)
    if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
        raise ParameterError(f"sigma must be square, got shape {sigma.shape}")
    if chol is None:
        chol = cholesky_factor(sigma)
    return Dataset(rows=_draw_rows(chol, n, seed), seed=seed)
