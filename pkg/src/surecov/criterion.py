"""Stein-type unbiased risk criteria for choosing the tapering parameter.

For a tapered estimate with weights ``w_ij = w(tau, |i-j|)`` applied to the
MLE ``Sigma_tilde``, the criterion with penalty multiplier ``c >= 2`` is

    SURE_c(tau) = sum_ij (n/(n-1) - w_ij)^2 * s_ij^2
                + sum_ij (c*w_ij - n/(n-1)) * (a_n s_ij^2 + b_n s_ii s_jj),

with ``s = Sigma_tilde``,

    a_n = n(n-3) / ((n-1)(n-2)(n+1)),    b_n = n / ((n+1)(n-2)).

``c = 2`` is the unbiased estimator of the Frobenius risk
``E || w o Sigma_tilde - Sigma ||_F^2`` (the AIC analogue); ``c = log n``
plays the role of BIC.  The theory behind the criterion assumes ``c = o(n)``;
this is documented, not enforced.

An equivalent three-term form (used as a cross-check oracle) is

    SURE_c(tau) = ||w o Sigma_tilde - Sigma_tilde^s||_F^2
                - sum_ij varhat_ij + c*(n-1)/n * sum_ij w_ij * varhat_ij,

where ``Sigma_tilde^s = n/(n-1) Sigma_tilde`` and ``varhat_ij =
n/(n-1) * (a_n s_ij^2 + b_n s_ii s_jj)`` is the unbiased estimate of
``var(Sigma_tilde^s_ij)``.  The two forms are algebraically identical.

Because every built-in weight depends only on ``d = |i-j|``, profiles are
computed from per-distance band sums

    S1(d) = sum_{|i-j|=d} s_ij^2,    S2(d) = sum_{|i-j|=d} s_ii s_jj,

precomputed once in O(p^2); each tau then costs O(p).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from .errors import DataError, ParameterError
from .estimate import WeightScheme, frob_sq_dist, taper, unbiased_cov
from .model import Matrix

__all__ = [
    "SureConstants",
    "CriterionProfile",
    "sure_constants",
    "var_hat",
    "band_sums",
    "sure_profile",
    "sure_eq2_reference",
    "select_tau",
    "default_tau_grid",
]


@dataclass(frozen=True)
class SureConstants:
    """Sample-size constants entering the criterion."""

    n: int
    c: float
    a_n: float
    b_n: float

    @property
    def gamma(self) -> float:
        """The bias factor n/(n-1) relating the MLE to the unbiased estimate."""
        return self.n / (self.n - 1)


def sure_constants(n: int, c: float = 2.0) -> SureConstants:
    """Compute ``a_n`` and ``b_n``; requires n >= 3 (n = 3 gives a_n = 0)."""
    if n < 3:
        raise DataError(f"SURE constants require n >= 3, got n={n}")
    if c < 2:
        raise ParameterError(f"penalty multiplier c must be >= 2, got c={c}")
    a_n = n * (n - 3) / ((n - 1) * (n - 2) * (n + 1))
    b_n = n / ((n + 1) * (n - 2))
    return SureConstants(n=n, c=float(c), a_n=a_n, b_n=b_n)


def var_hat(sigma_tilde: Matrix, consts: SureConstants, i: int, j: int) -> float:
    """Unbiased estimate of ``var(Sigma_tilde^s_ij)``.

    Equals ``n/(n-1) * (a_n s_ij^2 + b_n s_ii s_jj)`` -- the unique expression
    under which the three-term and closed forms of the criterion coincide.
    """
    s = np.asarray(sigma_tilde, dtype=np.float64)
    return consts.gamma * (
        consts.a_n * float(s[i, j]) ** 2 + consts.b_n * float(s[i, i]) * float(s[j, j])
    )


def band_sums(sigma: Matrix) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Per-distance sums ``S1(d) = sum_{|i-j|=d} m_ij^2`` and
    ``S2(d) = sum_{|i-j|=d} m_ii m_jj`` for ``d = 0 .. p-1``.

    Off-diagonal distances count both triangles.
    """
    m = np.asarray(sigma, dtype=np.float64)
    p = m.shape[0]
    dvec = np.diagonal(m)
    s1 = np.empty(p)
    s2 = np.empty(p)
    for d in range(p):
        band = np.diagonal(m, offset=d)
        mult = 1.0 if d == 0 else 2.0
        s1[d] = mult * float(band @ band)
        s2[d] = mult * float(dvec[: p - d] @ dvec[d:])
    return s1, s2


@dataclass(frozen=True)
class CriterionProfile:
    """Criterion values over a grid of tapering parameters."""

    tau_grid: tuple[int, ...]
    values: NDArray[np.float64] = field(repr=False)
    c: float = 2.0
    selected_tau: int = 1

    def value_at(self, tau: int) -> float:
        return float(self.values[self.tau_grid.index(tau)])


def _check_grid(tau_grid) -> tuple[int, ...]:
    grid = tuple(int(t) for t in tau_grid)
    if not grid:
        raise ParameterError("tau grid must be nonempty")
    if any(t < 1 for t in grid):
        raise ParameterError(f"every tau must be >= 1, got {grid}")
    return grid


def default_tau_grid(p: int, n: int, tau_max: int | None = None) -> tuple[int, ...]:
    """Grid 1..min(p, n) by default; ``tau_max`` overrides the cap up to p."""
    cap = min(p, n) if tau_max is None else min(tau_max, p)
    return tuple(range(1, max(cap, 1) + 1))


def profile_values(
    s1: NDArray[np.float64],
    s2: NDArray[np.float64],
    consts: SureConstants,
    scheme: WeightScheme,
    tau_grid: tuple[int, ...],
) -> NDArray[np.float64]:
    """Criterion values from precomputed band sums (one O(p) pass per tau)."""
    p = len(s1)
    gamma = consts.gamma
    values = np.empty(len(tau_grid))
    for k, tau in enumerate(tau_grid):
        w = scheme.weights(tau, p)
        bbar = consts.c * w - gamma
        values[k] = float((gamma - w) ** 2 @ s1 + bbar @ (consts.a_n * s1 + consts.b_n * s2))
    return values


def sure_profile(
    sigma_tilde: Matrix,
    consts: SureConstants,
    scheme: WeightScheme,
    tau_grid,
) -> CriterionProfile:
    """Evaluate ``SURE_c`` over ``tau_grid`` and select the minimizing tau.

    Ties are broken toward the smallest tau (the most parsimonious estimate).
    """
    if consts.n < 4:
        raise DataError(f"the criterion requires n >= 4, got n={consts.n}")
    grid = _check_grid(tau_grid)
    s1, s2 = band_sums(sigma_tilde)
    values = profile_values(s1, s2, consts, scheme, grid)
    return CriterionProfile(
        tau_grid=grid, values=values, c=consts.c, selected_tau=_smallest_argmin(grid, values)
    )


def sure_eq2_reference(
    sigma_tilde: Matrix,
    consts: SureConstants,
    scheme: WeightScheme,
    tau: int,
) -> float:
    """Three-term form of the criterion, computed literally.

    ``||w o s - s^u||_F^2 - sum varhat + c*(n-1)/n * sum w*varhat`` with
    ``s^u`` the unbiased sample covariance.  Serves as an independent oracle
    for :func:`sure_profile`; it is O(p^2) per tau.
    """
    if consts.n < 4:
        raise DataError(f"the criterion requires n >= 4, got n={consts.n}")
    s = np.asarray(sigma_tilde, dtype=np.float64)
    p = s.shape[0]
    fit = frob_sq_dist(taper(s, scheme, tau).matrix, unbiased_cov(s, consts.n))
    d = np.abs(np.subtract.outer(np.arange(p), np.arange(p)))
    w = scheme.weights(tau, p)[d]
    vhat = consts.gamma * (consts.a_n * s**2 + consts.b_n * np.outer(np.diagonal(s), np.diagonal(s)))
    penalty = consts.c * (1.0 / consts.gamma) * float(np.sum(w * vhat))
    return fit - float(np.sum(vhat)) + penalty


def _smallest_argmin(grid: tuple[int, ...], values: NDArray[np.float64]) -> int:
    best = float(np.min(values))
    return min(t for t, v in zip(grid, values) if v == best)


def select_tau(profile: CriterionProfile) -> int:
    """Smallest tau attaining the minimum criterion value."""
    values = np.asarray(profile.values)
    if values.size == 0:
        raise ParameterError("empty criterion profile")
    return _smallest_argmin(profile.tau_grid, values)
