"""Exact population quantities for the criterion: risk, variance, moment oracles.

Everything here is a deterministic function of the true covariance ``Sigma``.

Risk
----
With ``gamma = n/(n-1)``, ``abar(w) = (gamma - w)^2``, ``bbar(w) = c*w - gamma``,
the expectation of the criterion under weights ``w_ij`` is

    R_c(tau) = sum_ij  f1(w_ij) * sigma_ij^2  +  f2(w_ij) * sigma_ii sigma_jj,

    f1(w) = (n-1)/n * w^2 - (2n-c)/n * w + 1,
    f2(w) = (n-1)/n^2 * w^2 + (c-2)/n * w.

The coefficients follow from E[s_ij^2] and E[s_ii s_jj] for the MLE ``s`` and
the two exact identities ``a_n + (n-1) b_n = gamma`` and
``a_n + 2 b_n / n = 1/(n-1)``.  At ``c = 2`` and banding weights this reduces
to the familiar closed form

    R(tau) = sum_{|i-j|<tau} (sigma_ij^2/n + (n-1)/n^2 sigma_ii sigma_jj)
           + sum_{|i-j|>=tau} sigma_ij^2,

which is the true Frobenius risk ``E||w o s - Sigma||_F^2``.

Variance
--------
``var_n`` evaluates the O(1/n^2)-order approximation to
``Var(SURE_c(tau))``, a quadruple sum over (i,j,s,t) with coefficient
matrices

    Abar_ij = abar_ij + a_n bbar_ij,
    Bbar_ij = abar_ij + (a_n + (n-1) b_n) bbar_ij
            = w_ij^2 + gamma (c-2) w_ij,

(the second form of ``Bbar`` is algebraically identical and vanishes exactly
for ``|i-j| >= tau``, which the computation relies on):

    Var_n(tau) =
      2(n-2)/n^4     * sum Bbar_ij Bbar_st (s_ii s_ss s_jt^2 + s_ii s_tt s_js^2
                                          + s_jj s_ss s_it^2 + s_jj s_tt s_is^2)
    + 2(n-1)(n-2)/n^4 * sum Abar_ij Abar_st (s_is s_jt + s_it s_js)^2
    + 4(n-2)^3/n^4   * sum Abar_ij Abar_st s_ij s_st (s_is s_jt + s_it s_js)
    + 8(n-2)^2/n^4   * sum Abar_ij Bbar_st s_ij (s_ss s_it s_jt + s_tt s_is s_js)

(``s`` = sigma here).  All terms except one contraction inside the second sum
reduce to matrix products; the remaining genuinely quartic contraction is
evaluated with an O(p^4) blocked loop (capped at p = 64) or, for banded
truncations, an O(p k^3) windowed loop.

Oracles
-------
``isserlis_moment`` enumerates pair partitions to compute Gaussian product
moments; ``exact_sure_variance`` expands Var(SURE_c) exactly for tiny p via
the representation of the MLE as ``(1/n) sum_{k=1}^{n-1} Z_k Z_k^T`` and the
fifteen equality patterns of four replicate indices.  These exist purely to
validate ``var_n``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import chain
from typing import Iterator, Sequence

import numpy as np
from numpy.typing import NDArray

from .criterion import _smallest_argmin, band_sums
from .errors import DataError, ParameterError
from .estimate import WeightScheme
from .model import Matrix

__all__ = [
    "CoeffSet",
    "RiskProfile",
    "VarApprox",
    "coeffs",
    "risk_profile",
    "oracle_tau",
    "var_n",
    "isserlis_moment",
    "exact_sure_variance",
    "VAR_EXACT_CAP",
]

#: largest p for which the exact O(p^4) variance sum is attempted
VAR_EXACT_CAP = 64


@dataclass(frozen=True)
class CoeffSet:
    """The five per-entry coefficients, as functions of (n, c, omega)."""

    abar: float
    bbar: float
    Abar: float
    Bbar: float
    Cbar: float


def coeffs(n: int, c: float, omega: float) -> CoeffSet:
    """Coefficient set at a single weight value.

    ``Bbar`` is computed as ``omega^2 + n/(n-1)*(c-2)*omega``, which equals
    ``abar + (a_n + (n-1) b_n) * bbar`` exactly (since
    ``a_n + (n-1) b_n = n/(n-1)``) but is exactly zero at ``omega = 0``.
    """
    if n < 4:
        raise DataError(f"coefficients require n >= 4, got n={n}")
    if not 0.0 <= omega <= 1.0:
        raise ParameterError(f"omega must lie in [0, 1], got {omega}")
    gamma = n / (n - 1)
    a_n = n * (n - 3) / ((n - 1) * (n - 2) * (n + 1))
    b_n = n / ((n + 1) * (n - 2))
    abar = (gamma - omega) ** 2
    bbar = c * omega - gamma
    return CoeffSet(
        abar=abar,
        bbar=bbar,
        Abar=abar + a_n * bbar,
        Bbar=omega**2 + gamma * (c - 2.0) * omega,
        Cbar=abar + (a_n + b_n) * bbar,
    )


@dataclass(frozen=True)
class RiskProfile:
    """Exact criterion risk ``R_c`` over a grid of tapering parameters."""

    tau_grid: tuple[int, ...]
    values: NDArray[np.float64] = field(repr=False)
    c: float = 2.0
    oracle_tau: int = 1

    def value_at(self, tau: int) -> float:
        return float(self.values[self.tau_grid.index(tau)])

    def min_value(self) -> float:
        return float(np.min(self.values))


def _risk_coeff_vectors(w: NDArray[np.float64], n: int, c: float):
    f1 = (n - 1) / n * w**2 - (2 * n - c) / n * w + 1.0
    f2 = (n - 1) / n**2 * w**2 + (c - 2.0) / n * w
    return f1, f2


def risk_profile(
    sigma: Matrix,
    n: int,
    scheme: WeightScheme,
    c: float = 2.0,
    tau_grid: Sequence[int] | None = None,
) -> RiskProfile:
    """Exact ``R_c(tau) = E[SURE_c(tau)]`` over the grid; at c = 2 this is the
    Frobenius risk of the tapered estimator.

    The oracle tau is the smallest grid point attaining the minimum.
    """
    if n < 4:
        raise DataError(f"risk profile requires n >= 4, got n={n}")
    sigma = np.asarray(sigma, dtype=np.float64)
    p = sigma.shape[0]
    grid = tuple(int(t) for t in (tau_grid if tau_grid is not None else range(1, min(p, n) + 1)))
    if not grid or any(t < 1 for t in grid):
        raise ParameterError(f"invalid tau grid {grid}")
    t1, t2 = band_sums(sigma)
    values = np.empty(len(grid))
    for k, tau in enumerate(grid):
        w = scheme.weights(tau, p)
        f1, f2 = _risk_coeff_vectors(w, n, c)
        values[k] = float(f1 @ t1 + f2 @ t2)
    return RiskProfile(
        tau_grid=grid, values=values, c=float(c), oracle_tau=_smallest_argmin(grid, values)
    )


def oracle_tau(profile: RiskProfile) -> int:
    """Smallest tau minimizing the exact risk."""
    if len(profile.tau_grid) == 0:
        raise ParameterError("empty risk profile")
    return _smallest_argmin(profile.tau_grid, np.asarray(profile.values))


@dataclass(frozen=True)
class VarApprox:
    """Value of the variance approximation at one tau."""

    tau: int
    value: float
    method: str
    truncation_band: int | None = None


def _coeff_matrices(p: int, n: int, c: float, scheme: WeightScheme, tau: int):
    dist = np.abs(np.subtract.outer(np.arange(p), np.arange(p)))
    w = scheme.weights(tau, p)[dist]
    gamma = n / (n - 1)
    a_n = n * (n - 3) / ((n - 1) * (n - 2) * (n + 1))
    abar = (gamma - w) ** 2
    bbar = c * w - gamma
    amat = abar + a_n * bbar
    bmat = w**2 + gamma * (c - 2.0) * w  # exactly zero where w = 0
    return amat, bmat


def _quartic_contraction_dense(amat: Matrix, s: Matrix) -> float:
    # sum_ijst A_ij A_st s_is s_it s_js s_jt, O(p^4) via one GEMM per row i
    total = 0.0
    for i in range(s.shape[0]):
        mi = s * s[i]  # mi[j, t] = s_jt * s_it
        total += float(amat[i] @ np.sum((mi @ amat) * mi, axis=1))
    return total


def _quartic_contraction_banded(amat: Matrix, s: Matrix, band: int) -> float:
    # same contraction, skipping windows where a sigma cross-factor vanishes:
    # s_is != 0 needs |i-s| < band, so s,t range over a window of width
    # < 2*band around (i, j) and |i-j| <= 2*band-2
    p = s.shape[0]
    total = 0.0
    for i in range(p):
        for j in range(max(0, i - 2 * band + 2), min(p, i + 2 * band - 1)):
            lo = max(0, max(i, j) - band + 1)
            hi = min(p, min(i, j) + band)
            if lo >= hi:
                continue
            w = s[i, lo:hi] * s[j, lo:hi]
            total += amat[i, j] * float(w @ amat[lo:hi, lo:hi] @ w)
    return total


def var_n(
    sigma: Matrix,
    n: int,
    scheme: WeightScheme,
    tau: int,
    c: float = 2.0,
    method: str = "exact",
    truncation_band: int | None = None,
) -> VarApprox:
    """Evaluate the four-term variance approximation at one tau.

    ``method="exact"`` performs the full quadruple sum (p capped at
    ``VAR_EXACT_CAP``).  ``method="banded-truncated"`` treats ``sigma`` as
    exactly zero outside ``|i-j| < truncation_band``; every (i,j,s,t) tuple
    whose sigma cross-factors all vanish is skipped, which is lossless when
    ``sigma`` really is banded with bandwidth <= truncation_band and an
    approximation otherwise.
    """
    if n < 4:
        raise DataError(f"var_n requires n >= 4, got n={n}")
    sigma = np.asarray(sigma, dtype=np.float64)
    p = sigma.shape[0]
    if method == "exact":
        if p > VAR_EXACT_CAP:
            raise ParameterError(
                f"exact var_n is O(p^4) and capped at p={VAR_EXACT_CAP}; "
                f"got p={p} -- use method='banded-truncated' with a truncation band"
            )
        s = sigma
        band = None
    elif method == "banded-truncated":
        if truncation_band is None or truncation_band < 1:
            raise ParameterError("banded-truncated var_n needs truncation_band >= 1")
        band = int(truncation_band)
        dist = np.abs(np.subtract.outer(np.arange(p), np.arange(p)))
        s = np.where(dist < band, sigma, 0.0)
    else:
        raise ParameterError(f"unknown var_n method {method!r}")

    amat, bmat = _coeff_matrices(p, n, c, scheme, tau)
    diag = np.diagonal(s).copy()
    u = bmat @ diag  # u_j = sum_i Bbar_ij s_ii
    msq = s * s
    pmat = amat * s
    sps = s @ pmat @ s
    mam = msq @ amat @ msq

    n4 = float(n) ** 4
    # the four summands, each contracted by symmetry of the coefficient
    # matrices under (i<->j), (s<->t) relabeling
    term_bb = 8.0 * (n - 2) / n4 * float(u @ msq @ u)
    if band is None:
        quartic = _quartic_contraction_dense(amat, s)
    else:
        quartic = _quartic_contraction_banded(amat, s, band)
    term_aa_sq = 2.0 * (n - 1) * (n - 2) / n4 * (2.0 * float(np.sum(amat * mam)) + 2.0 * quartic)
    term_aa_cross = 8.0 * (n - 2) ** 3 / n4 * float(np.sum(pmat * sps))
    term_ab = 16.0 * (n - 2) ** 2 / n4 * float(u @ np.diagonal(sps))

    value = term_bb + term_aa_sq + term_aa_cross + term_ab
    return VarApprox(tau=int(tau), value=value, method=method, truncation_band=band)


def isserlis_moment(sigma_small: Matrix, indices: Sequence[int]) -> float:
    """Gaussian product moment ``E[X_{i1} ... X_{ik}]`` for X ~ N(0, sigma).

    Sums ``prod sigma_(pairs)`` over all (k-1)!! perfect pairings of the
    positions.  Odd k gives 0; k is capped at 8.
    """
    sigma = np.asarray(sigma_small, dtype=np.float64)
    idx = [int(i) for i in indices]
    if len(idx) > 8:
        raise ParameterError(f"isserlis moment capped at 8 indices, got {len(idx)}")
    if len(idx) % 2 == 1:
        return 0.0
    if not idx:
        return 1.0

    def pairings(positions: list[int]) -> Iterator[float]:
        if not positions:
            yield 1.0
            return
        first, rest = positions[0], positions[1:]
        for k in range(len(rest)):
            factor = sigma[idx[first], idx[rest[k]]]
            for sub in pairings(rest[:k] + rest[k + 1 :]):
                yield factor * sub

    return float(sum(pairings(list(range(len(idx))))))


def _set_partitions(items: list[int]) -> Iterator[list[list[int]]]:
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for partial in _set_partitions(rest):
        for k in range(len(partial)):
            yield partial[:k] + [[first] + partial[k]] + partial[k + 1 :]
        yield [[first]] + partial


def exact_sure_variance(
    sigma_small: Matrix,
    n: int,
    scheme: WeightScheme,
    tau: int,
    c: float = 2.0,
) -> float:
    """Exact ``Var(SURE_c(tau))`` by brute-force moment expansion (p <= 3).

    The criterion is a quadratic form ``sum_t coef_t * m_{pair1(t)} m_{pair2(t)}``
    in entries of ``m = (1/n) sum_{k=1}^{n-1} Z_k Z_k^T``.  Every mixed moment
    ``E[m_ab m_cd m_ef m_gh]`` is reduced over the 15 equality patterns of the
    four replicate indices; within a pattern the count of index assignments is
    the falling factorial ``(n-1)(n-2)...`` and each block contributes an
    Isserlis moment of its concatenated coordinate indices.
    """
    sigma = np.asarray(sigma_small, dtype=np.float64)
    p = sigma.shape[0]
    if p > 3:
        raise ParameterError(f"exact_sure_variance is capped at p <= 3, got p={p}")
    if not 4 <= n <= 100:
        raise ParameterError(f"exact_sure_variance needs 4 <= n <= 100, got n={n}")

    gamma = n / (n - 1)
    a_n = n * (n - 3) / ((n - 1) * (n - 2) * (n + 1))
    b_n = n / ((n + 1) * (n - 2))
    wvec = scheme.weights(tau, p)

    # SURE_c = sum over terms: coef * m[pair1] * m[pair2]
    terms: list[tuple[float, tuple[int, int], tuple[int, int]]] = []
    for i in range(p):
        for j in range(p):
            w = wvec[abs(i - j)]
            abar = (gamma - w) ** 2
            bbar = c * w - gamma
            terms.append((abar + a_n * bbar, (i, j), (i, j)))
            terms.append((b_n * bbar, (i, i), (j, j)))

    iss_cache: dict[tuple[int, ...], float] = {}

    def iss(idx: tuple[int, ...]) -> float:
        key = tuple(sorted(idx))
        if key not in iss_cache:
            iss_cache[key] = isserlis_moment(sigma, key)
        return iss_cache[key]

    partitions_by_size = {
        k: list(_set_partitions(list(range(k)))) for k in (2, 4)
    }

    def moment(pairs: Sequence[tuple[int, int]]) -> float:
        # E[ prod_m m_{pairs[m]} ]
        total = 0.0
        for partition in partitions_by_size[len(pairs)]:
            count = math.perm(n - 1, len(partition))
            if count == 0:
                continue
            prod = float(count)
            for block in partition:
                prod *= iss(tuple(chain.from_iterable(pairs[m] for m in block)))
            total += prod
        return total / float(n) ** len(pairs)

    mean = sum(coef * moment([p1, p2]) for coef, p1, p2 in terms)
    second = 0.0
    for coef_t, t1, t2 in terms:
        for coef_u, u1, u2 in terms:
            second += coef_t * coef_u * moment([t1, t2, u1, u2])
    return second - mean**2
