"""Sample covariance, Toeplitz tapering weights, and the tapered estimator.

All built-in weight schemes depend on the off-diagonal distance ``d = |i-j|``
only and satisfy, for every tapering parameter ``tau >= 1``:

(i)   ``w(tau, d) = 1`` for ``d <= floor(tau/2)``,
(ii)  ``w(tau, d) = 0`` for ``d >= tau``,
(iii) ``0 <= w(tau, d) <= 1`` in between.

``tau = 1`` therefore keeps only the diagonal.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from numpy.typing import NDArray

from .errors import DataError, ParameterError
from .model import Dataset, Matrix

__all__ = [
    "Banding",
    "CzzTaper",
    "CustomToeplitz",
    "WeightScheme",
    "TaperedEstimate",
    "weight",
    "taper",
    "mle_cov",
    "unbiased_cov",
    "frob_sq_dist",
]


class _Scheme:
    """Common interface: a vector of weights per distance for a given tau."""

    name = "custom"

    def weights(self, tau: int, dmax: int) -> NDArray[np.float64]:
        """Weights ``w(tau, d)`` for ``d = 0 .. dmax-1``."""
        raise NotImplementedError

    def weight(self, tau: int, d: int) -> float:
        if d < 0:
            raise ParameterError(f"distance d must be >= 0, got {d}")
        _check_tau(tau)
        if d >= tau:
            return 0.0
        return float(self.weights(tau, d + 1)[d])


@dataclass(frozen=True)
class Banding(_Scheme):
    """Indicator weights ``w(tau, d) = 1{d < tau}``."""

    name = "banding"

    def weights(self, tau: int, dmax: int) -> NDArray[np.float64]:
        _check_tau(tau)
        d = np.arange(dmax)
        return (d < tau).astype(np.float64)


@dataclass(frozen=True)
class CzzTaper(_Scheme):
    """Trapezoidal tapering weights.

    ``w = 1`` for ``d <= floor(tau/2)``, then decays linearly,
    ``w = (tau - d) / floor(tau/2)``, and vanishes for ``d >= tau``.  For
    ``tau <= 3`` the linear zone is degenerate and the weights coincide with
    banding.
    """

    name = "czz"

    def weights(self, tau: int, dmax: int) -> NDArray[np.float64]:
        _check_tau(tau)
        d = np.arange(dmax, dtype=np.float64)
        half = tau // 2
        w = np.zeros(dmax)
        w[d <= half] = 1.0
        mid = (d > half) & (d < tau)
        if mid.any():
            # half >= 1 whenever the linear zone is nonempty (tau >= 2)
            w[mid] = (tau - d[mid]) / half
        return w


@dataclass(frozen=True)
class CustomToeplitz(_Scheme):
    """User-supplied weights: ``table[tau]`` lists ``w(tau, d)`` for ``d < tau``.

    Entries beyond the listed ones are zero.  Each row is validated against
    conditions (i)-(iii) at construction.
    """

    table: Mapping[int, Sequence[float]] = field(repr=False)
    name = "custom"

    def __post_init__(self) -> None:
        clean: dict[int, NDArray[np.float64]] = {}
        for tau, row in self.table.items():
            _check_tau(tau)
            w = np.asarray(row, dtype=np.float64)
            if w.shape != (tau,):
                raise ParameterError(
                    f"weight table for tau={tau} must have length {tau}, got {w.shape}"
                )
            half = tau // 2
            if np.any(w[: half + 1] != 1.0):
                raise ParameterError(f"tau={tau}: weights must be 1 for d <= floor(tau/2)")
            if np.any((w < 0.0) | (w > 1.0)):
                raise ParameterError(f"tau={tau}: weights must lie in [0, 1]")
            clean[int(tau)] = w
        object.__setattr__(self, "table", clean)

    def weights(self, tau: int, dmax: int) -> NDArray[np.float64]:
        _check_tau(tau)
        if tau not in self.table:
            raise ParameterError(f"no weights provided for tau={tau}")
        w = np.zeros(dmax)
        row = self.table[tau]
        w[: min(tau, dmax)] = row[:dmax]
        return w


WeightScheme = Banding | CzzTaper | CustomToeplitz


def _check_tau(tau: int) -> None:
    if not (isinstance(tau, (int, np.integer)) and tau >= 1):
        raise ParameterError(f"tau must be a positive integer, got {tau!r}")


def weight(scheme: WeightScheme, tau: int, d: int) -> float:
    """Weight applied at off-diagonal distance ``d`` for tapering parameter ``tau``."""
    return scheme.weight(tau, d)


@dataclass(frozen=True)
class TaperedEstimate:
    """A tapered sample covariance ``w o Sigma_tilde`` (entrywise product)."""

    tau: int
    scheme: WeightScheme
    matrix: Matrix = field(repr=False)


def mle_cov(data: Dataset) -> Matrix:
    """Maximum likelihood covariance ``(1/n) sum (X_k - Xbar)(X_k - Xbar)^T``."""
    if data.n < 3:
        raise DataError(f"need n >= 3 observations, got n={data.n}")
    centered = data.rows - data.rows.mean(axis=0)
    s = centered.T @ centered / data.n
    # force exact symmetry: the BLAS product can differ across the diagonal
    # in the last bit
    return (s + s.T) / 2.0


def unbiased_cov(sigma_tilde: Matrix, n: int) -> Matrix:
    """Rescale the MLE to the unbiased sample covariance ``n/(n-1) * Sigma_tilde``."""
    if n < 3:
        raise DataError(f"need n >= 3, got n={n}")
    return np.asarray(sigma_tilde, dtype=np.float64) * (n / (n - 1))


def taper(sigma_tilde: Matrix, scheme: WeightScheme, tau: int) -> TaperedEstimate:
    """Apply the scheme's weights entrywise: ``matrix[i,j] = w(tau,|i-j|) * sigma_tilde[i,j]``."""
    _check_tau(tau)
    sigma_tilde = np.asarray(sigma_tilde, dtype=np.float64)
    p = sigma_tilde.shape[0]
    w = scheme.weights(tau, p)
    d = np.abs(np.subtract.outer(np.arange(p), np.arange(p)))
    return TaperedEstimate(tau=tau, scheme=scheme, matrix=w[d] * sigma_tilde)


def frob_sq_dist(a: Matrix, b: Matrix) -> float:
    """Squared Frobenius distance ``sum_ij (a_ij - b_ij)**2`` over all p^2 entries."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ParameterError(f"dimension mismatch: {a.shape} vs {b.shape}")
    diff = (a - b).ravel()
    # numpy dot uses pairwise/blocked accumulation, keeping rounding error
    # negligible for p ~ 1000 matrices
    return float(diff @ diff)
