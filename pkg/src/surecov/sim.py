"""Monte Carlo replication engine and preset experiments.

Reproducibility contract: a replication is a pure function of
``(config, rep_index)``.  Per-replication seeds are a 64-bit hash of
``(base_seed, rep_index)``, so scheduling and thread counts can never change
the streams, and aggregation happens in replication order.  Reports separate
a deterministic ``payload`` (config echo + results, byte-stable across thread
counts) from a ``meta`` section holding wall time and runtime facts.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import struct
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from numpy.typing import NDArray

from .criterion import (
    _smallest_argmin,
    band_sums,
    default_tau_grid,
    profile_values,
    sure_constants,
)
from .errors import DataError, ParameterError
from .estimate import Banding, WeightScheme
from .model import (
    ArDecay,
    BandedUniform,
    CovModel,
    PolyDecay,
    _draw_rows,
    build_sigma,
    cholesky_factor,
    model_bandwidth,
)
from .theory import VAR_EXACT_CAP, risk_profile, var_n

__all__ = [
    "ExperimentConfig",
    "ExperimentReport",
    "ReplicationRecord",
    "derive_seed",
    "run_replication",
    "run_experiment",
    "clt_experiment",
    "rate_experiment",
    "oracle_ratio_experiment",
    "consistency_experiment",
    "normal_cdf",
    "ks_statistic",
    "table1_config",
    "table2_config",
    "TABLE1_VARIANTS",
]


_U64 = 0xFFFFFFFFFFFFFFFF


def derive_seed(base_seed: int, rep_index: int) -> int:
    """64-bit per-replication seed, a stable hash of (base_seed, rep_index).

    Both arguments are reduced mod 2**64, so derived seeds can safely be
    chained (e.g. one sub-seed per sample size, then one per replication).
    """
    packed = struct.pack("<QQ", base_seed & _U64, rep_index & _U64)
    return int.from_bytes(hashlib.blake2b(packed, digest_size=8).digest(), "little")


def normal_cdf(x: float) -> float:
    """Standard normal CDF via the complementary error function.

    ``math.erfc`` is evaluated by the platform libm's rational approximation;
    relative error is below 1e-14 on |x| <= 8, comfortably inside the 1e-12
    accuracy this package relies on for KS statistics.
    """
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def ks_statistic(sample: NDArray[np.float64]) -> float:
    """Kolmogorov-Smirnov distance between the sample and the standard normal."""
    xs = np.sort(np.asarray(sample, dtype=np.float64))
    m = xs.size
    if m < 2:
        raise DataError("KS statistic is undefined for fewer than 2 observations")
    cdf = np.array([normal_cdf(float(x)) for x in xs])
    grid_lo = np.arange(m) / m
    grid_hi = np.arange(1, m + 1) / m
    return float(np.max(np.maximum(cdf - grid_lo, grid_hi - cdf)))


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to rerun an experiment bit-identically."""

    model: CovModel
    n: int
    scheme: WeightScheme = Banding()
    c_values: tuple[float | str, ...] = (2.0,)
    replications: int = 100
    base_seed: int = 0
    tau_max: int | None = None  # grid is 1..min(p, n) unless overridden (capped at p)
    kind: str = "table"  # table | clt | rate | oracle-ratio | consistency
    tau_fixed: int | None = None  # clt only
    var_method: str | None = None  # clt only: exact | banded-truncated | None = auto
    truncation_band: int | None = None
    threads: int = 0  # 0 = SURECOV_THREADS env, else cpu count

    def __post_init__(self) -> None:
        if self.replications < 1:
            raise ParameterError(f"replications must be >= 1, got {self.replications}")
        if self.n < 4:
            raise ParameterError(f"experiments require n >= 4, got n={self.n}")
        if not self.c_values:
            raise ParameterError("need at least one c value")

    @property
    def p(self) -> int:
        return self.model.p

    def tau_grid(self) -> tuple[int, ...]:
        return default_tau_grid(self.p, self.n, self.tau_max)

    def resolved_c(self) -> dict[str, float]:
        out: dict[str, float] = {}
        for cv in self.c_values:
            if isinstance(cv, str):
                if cv != "logn":
                    raise ParameterError(f"symbolic c must be 'logn', got {cv!r}")
                out["logn"] = math.log(self.n)
            else:
                if cv < 2:
                    raise ParameterError(f"c must be >= 2, got {cv}")
                out[f"{cv:g}"] = float(cv)
        return out

    def echo(self) -> dict:
        return {
            "model": _model_echo(self.model),
            "n": self.n,
            "p": self.p,
            "scheme": self.scheme.name,
            "c_values": [cv if isinstance(cv, str) else float(cv) for cv in self.c_values],
            "replications": self.replications,
            "base_seed": self.base_seed,
            "tau_grid": {"min": 1, "max": self.tau_grid()[-1]},
            "kind": self.kind,
            "tau_fixed": self.tau_fixed,
            "var_method": self.var_method,
            "truncation_band": self.truncation_band,
        }


def _model_echo(model: CovModel) -> dict:
    if isinstance(model, PolyDecay):
        return {"variant": "poly-decay", "rho": model.rho, "alpha": model.alpha, "p": model.p}
    if isinstance(model, ArDecay):
        return {"variant": "ar-decay", "rho": model.rho, "p": model.p}
    if isinstance(model, BandedUniform):
        return {
            "variant": "banded-uniform",
            "k0": model.k0,
            "offdiag": model.offdiag,
            "p": model.p,
            "unit_diagonal": model.unit_diagonal,
        }
    return {"variant": "explicit", "p": model.p}


@dataclass(frozen=True)
class ExperimentReport:
    """Config echo plus results (deterministic) and meta (timing etc.)."""

    config: dict
    results: dict
    meta: dict = field(default_factory=dict)

    def payload_bytes(self) -> bytes:
        """Canonical bytes of the deterministic part of the report."""
        payload = {"config": self.config, "results": self.results}
        return json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()

    def to_json(self, indent: int | None = 2) -> str:
        doc = {"config": self.config, "results": self.results, "meta": self.meta}
        return json.dumps(doc, sort_keys=True, indent=indent)


@dataclass(frozen=True)
class ReplicationRecord:
    """Per-replication outcome: selected tau and realized loss per c value."""

    rep_index: int
    seed: int
    tau_hat: dict[str, int]
    loss: dict[str, float]
    loss_curve: NDArray[np.float64] | None = None  # per-tau loss, c-independent


class _ExperimentContext:
    """Shared per-experiment precomputation (factorization done once)."""

    def __init__(self, config: ExperimentConfig, keep_loss_curve: bool = False):
        self.config = config
        self.sigma = build_sigma(config.model)
        self.chol = cholesky_factor(self.sigma)
        self.grid = config.tau_grid()
        self.cmap = config.resolved_c()
        self.consts = {k: sure_constants(config.n, c) for k, c in self.cmap.items()}
        self.sig_sq_band, _ = band_sums(self.sigma)
        self.keep_loss_curve = keep_loss_curve
        # per-tau weights, reused by the loss curve
        p = config.p
        self.weights = np.vstack([config.scheme.weights(t, p) for t in self.grid])

    def replicate(self, rep_index: int) -> ReplicationRecord:
        cfg = self.config
        seed = derive_seed(cfg.base_seed, rep_index)
        rows = _draw_rows(self.chol, cfg.n, seed)
        centered = rows - rows.mean(axis=0)
        s_tilde = centered.T @ centered / cfg.n
        s_tilde = (s_tilde + s_tilde.T) / 2.0

        s1, s2 = band_sums(s_tilde)
        cross = _cross_band_sums(s_tilde, self.sigma)
        # loss(tau) = sum_d w^2 S1(d) - 2 w X(d) + T(d), all per-distance sums
        loss_curve = self.weights**2 @ s1 - 2.0 * self.weights @ cross + self.sig_sq_band.sum()

        tau_hat: dict[str, int] = {}
        loss: dict[str, float] = {}
        for key, consts in self.consts.items():
            values = profile_values(s1, s2, consts, cfg.scheme, self.grid)
            t = _smallest_argmin(self.grid, values)
            tau_hat[key] = t
            loss[key] = float(loss_curve[self.grid.index(t)])
        return ReplicationRecord(
            rep_index=rep_index,
            seed=seed,
            tau_hat=tau_hat,
            loss=loss,
            loss_curve=loss_curve if self.keep_loss_curve else None,
        )


def _cross_band_sums(a: Matrix, b: Matrix) -> NDArray[np.float64]:
    """Per-distance sums of a_ij * b_ij (both triangles for d >= 1)."""
    p = a.shape[0]
    out = np.empty(p)
    for d in range(p):
        mult = 1.0 if d == 0 else 2.0
        out[d] = mult * float(np.diagonal(a, d) @ np.diagonal(b, d))
    return out


Matrix = NDArray[np.float64]


def resolve_threads(threads: int) -> int:
    if threads > 0:
        return threads
    env = os.environ.get("SURECOV_THREADS", "")
    if env.strip():
        try:
            value = int(env)
        except ValueError:
            raise ParameterError(f"SURECOV_THREADS must be an integer, got {env!r}") from None
        if value > 0:
            return value
    return os.cpu_count() or 1


def _map_ordered(fn, count: int, threads: int) -> list:
    """Apply fn to 0..count-1, returning results in index order."""
    if threads <= 1 or count <= 1:
        return [fn(i) for i in range(count)]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, range(count)))


def run_replication(config: ExperimentConfig, rep_index: int) -> ReplicationRecord:
    """One replication, deterministic in (config, rep_index).

    Prefer :func:`run_experiment` for many replications: this convenience
    entry refactorizes the model covariance on every call.
    """
    return _ExperimentContext(config).replicate(rep_index)


def _mean_se(values: NDArray[np.float64]) -> tuple[float, float | None]:
    m = float(np.mean(values))
    if values.size < 2:
        return m, None  # SE undefined for a single replication
    sd = float(np.std(values, ddof=1))
    return m, sd / math.sqrt(values.size)


def run_experiment(config: ExperimentConfig) -> ExperimentReport:
    """Run all replications and aggregate (independent of scheduling order).

    The ``results`` section reports, per c value: mean loss and its standard
    error, the selection histogram over tau, and the mean selected tau;
    plus the exact oracle (min-risk tau and risk value at c = 2) and the
    empirical per-tau mean loss curve.
    """
    t0 = time.perf_counter()
    ctx = _ExperimentContext(config, keep_loss_curve=True)
    threads = resolve_threads(config.threads)
    records = _map_ordered(ctx.replicate, config.replications, threads)

    results: dict = {"per_c": {}}
    for key in ctx.cmap:
        losses = np.array([r.loss[key] for r in records])
        taus = [r.tau_hat[key] for r in records]
        mean, se = _mean_se(losses)
        hist: dict[str, int] = {}
        for t in taus:
            hist[str(t)] = hist.get(str(t), 0) + 1
        results["per_c"][key] = {
            "c": ctx.cmap[key],
            "mean_loss": mean,
            "se_loss": se,
            "selection_histogram": dict(sorted(hist.items(), key=lambda kv: int(kv[0]))),
            "mean_selected_tau": float(np.mean(taus)),
        }

    curve = np.vstack([r.loss_curve for r in records])
    results["mean_loss_by_tau"] = [float(v) for v in curve.mean(axis=0)]
    oracle = risk_profile(ctx.sigma, config.n, config.scheme, 2.0, ctx.grid)
    results["oracle"] = {
        "tau": oracle.oracle_tau,
        "min_risk": oracle.min_value(),
    }
    meta = {"wall_time_s": time.perf_counter() - t0, "threads": threads}
    return ExperimentReport(config=config.echo(), results=results, meta=meta)


def _single_c(config: ExperimentConfig) -> tuple[str, float]:
    cmap = config.resolved_c()
    if len(cmap) != 1:
        raise ParameterError(f"this experiment needs exactly one c value, got {list(cmap)}")
    return next(iter(cmap.items()))


def clt_experiment(config: ExperimentConfig) -> ExperimentReport:
    """Standardize SURE_c(tau) at a fixed tau and test empirical normality.

    Computes ``(SURE_c(tau) - R_c(tau)) / sqrt(Var_n(tau))`` per replication
    and reports the sample mean and variance of the standardized statistic and
    its KS distance to the standard normal.
    """
    t0 = time.perf_counter()
    if config.tau_fixed is None:
        raise ParameterError("clt experiment requires tau_fixed")
    if config.replications < 2:
        raise DataError("clt experiment needs >= 2 replications (KS undefined)")
    tau = int(config.tau_fixed)
    ckey, c = _single_c(config)
    sigma = build_sigma(config.model)
    p = config.p

    method = config.var_method
    band = config.truncation_band
    if method is None:
        bw = model_bandwidth(config.model)
        if p <= VAR_EXACT_CAP:
            method = "exact"
        elif bw is not None:
            method, band = "banded-truncated", bw
        else:
            raise ParameterError(
                f"cannot pick a var_n method automatically at p={p}: "
                "pass var_method='banded-truncated' with a truncation_band"
            )
    approx = var_n(sigma, config.n, config.scheme, tau, c, method=method, truncation_band=band)
    risk = risk_profile(sigma, config.n, config.scheme, c, (tau,)).values[0]
    scale = math.sqrt(approx.value)

    chol = cholesky_factor(sigma)
    consts = sure_constants(config.n, c)

    def one(rep_index: int) -> float:
        rows = _draw_rows(chol, config.n, derive_seed(config.base_seed, rep_index))
        centered = rows - rows.mean(axis=0)
        s_tilde = centered.T @ centered / config.n
        s_tilde = (s_tilde + s_tilde.T) / 2.0
        s1, s2 = band_sums(s_tilde)
        value = profile_values(s1, s2, consts, config.scheme, (tau,))[0]
        return (float(value) - float(risk)) / scale

    threads = resolve_threads(config.threads)
    sample = np.array(_map_ordered(one, config.replications, threads))

    results = {
        "c_key": ckey,
        "tau": tau,
        "risk": float(risk),
        "var_n": approx.value,
        "var_method": method,
        "truncation_band": band,
        "standardized_mean": float(np.mean(sample)),
        "standardized_var": float(np.var(sample, ddof=1)),
        "ks_distance": ks_statistic(sample),
    }
    meta = {"wall_time_s": time.perf_counter() - t0, "threads": threads}
    return ExperimentReport(config=config.echo(), results=results, meta=meta)


def fit_loglog_slope(ns: NDArray[np.float64], losses: NDArray[np.float64]) -> float:
    """Least-squares slope of log(loss) against log(n)."""
    if np.allclose(losses, losses[0]):
        return 0.0
    return float(np.polyfit(np.log(ns), np.log(losses), 1)[0])


def rate_experiment(
    alpha: float,
    rho: float,
    p: int,
    n_list: list[int],
    reps: int,
    base_seed: int = 0,
    threads: int = 0,
) -> ExperimentReport:
    """Fit the decay exponent of the SURE-tuned loss in n.

    The benchmark exponent for covariances decaying like ``|i-j|^-(alpha+1)``
    is ``-(2*alpha+1)/(2*(alpha+1))``.
    """
    t0 = time.perf_counter()
    if len(n_list) < 3:
        raise ParameterError(f"rate experiment needs >= 3 sample sizes, got {n_list}")
    per_n = []
    used_threads = resolve_threads(threads)
    for n in n_list:
        config = ExperimentConfig(
            model=PolyDecay(rho=rho, alpha=alpha, p=p),
            n=n,
            scheme=Banding(),
            c_values=(2.0,),
            replications=reps,
            base_seed=derive_seed(base_seed, n),
            kind="rate",
            threads=threads,
        )
        report = run_experiment(config)
        stats = report.results["per_c"]["2"]
        per_n.append({"n": n, "mean_loss": stats["mean_loss"], "se_loss": stats["se_loss"]})
    slope = fit_loglog_slope(
        np.array([row["n"] for row in per_n], dtype=float),
        np.array([row["mean_loss"] for row in per_n]),
    )
    results = {
        "per_n": per_n,
        "fitted_slope": slope,
        "theoretical_slope": -(2 * alpha + 1) / (2 * (alpha + 1)),
    }
    config_echo = {
        "model": {"variant": "poly-decay", "rho": rho, "alpha": alpha, "p": p},
        "n_list": list(n_list),
        "replications": reps,
        "base_seed": base_seed,
        "kind": "rate",
    }
    meta = {"wall_time_s": time.perf_counter() - t0, "threads": used_threads}
    return ExperimentReport(config=config_echo, results=results, meta=meta)


def oracle_ratio_experiment(config: ExperimentConfig) -> ExperimentReport:
    """Mean SURE-tuned loss divided by the oracle risk ``R(tau_0)``."""
    t0 = time.perf_counter()
    ckey, _ = _single_c(config)
    report = run_experiment(config)
    stats = report.results["per_c"][ckey]
    oracle = report.results["oracle"]
    ratio = stats["mean_loss"] / oracle["min_risk"]
    se = stats["se_loss"]
    results = {
        "mean_loss": stats["mean_loss"],
        "oracle_tau": oracle["tau"],
        "oracle_risk": oracle["min_risk"],
        "ratio": ratio,
        "ratio_half_width": (1.96 * se / oracle["min_risk"]) if se is not None else None,
    }
    meta = {"wall_time_s": time.perf_counter() - t0, "threads": report.meta["threads"]}
    return ExperimentReport(config=config.echo(), results=results, meta=meta)


def consistency_experiment(config: ExperimentConfig, n_list: list[int] | None = None) -> ExperimentReport:
    """Bandwidth recovery of the log(n)-penalized criterion on banded models.

    For each n, reports the fraction of replications with the
    ``c = log n`` selection equal to the true bandwidth ``k0``, and the
    fraction with the ``c = 2`` selection inside ``[k0, k0 + ceil(log n)]``.
    """
    t0 = time.perf_counter()
    k0 = model_bandwidth(config.model)
    if k0 is None:
        raise ParameterError("consistency experiment requires a model with an exact bandwidth")
    ns = list(n_list) if n_list is not None else [config.n]
    per_n = []
    used_threads = resolve_threads(config.threads)
    for n in ns:
        cfg = replace(config, n=n, c_values=(2.0, "logn"), kind="consistency")
        report = run_experiment(cfg)
        hist_logn = report.results["per_c"]["logn"]["selection_histogram"]
        hist_sure2 = report.results["per_c"]["2"]["selection_histogram"]
        reps = cfg.replications
        exact = hist_logn.get(str(k0), 0) / reps
        window_hi = k0 + math.ceil(math.log(n))
        in_window = sum(v for t, v in hist_sure2.items() if k0 <= int(t) <= window_hi) / reps
        per_n.append(
            {
                "n": n,
                "frac_logn_equals_k0": exact,
                "frac_sure2_in_window": in_window,
                "window": [k0, window_hi],
                "histogram_logn": hist_logn,
                "histogram_sure2": hist_sure2,
            }
        )
    results = {"k0": k0, "per_n": per_n}
    meta = {"wall_time_s": time.perf_counter() - t0, "threads": used_threads}
    return ExperimentReport(config=config.echo(), results=results, meta=meta)


# --- presets -------------------------------------------------------------

#: Table-1 style benchmark variants (banding, n=250, p=500, 100 replications)
TABLE1_VARIANTS: dict[str, CovModel] = {
    "model1-a05": PolyDecay(rho=0.6, alpha=0.5, p=500),
    "model1-a01": PolyDecay(rho=0.6, alpha=0.1, p=500),
    "model2-r095": ArDecay(rho=0.95, p=500),
    "model2-r05": ArDecay(rho=0.5, p=500),
}


def table1_config(
    variant: str,
    fast: bool = False,
    replications: int | None = None,
    base_seed: int = 0,
    threads: int = 0,
) -> ExperimentConfig:
    """Benchmark preset: SURE_2-tuned banding on the decay models."""
    if variant not in TABLE1_VARIANTS:
        raise ParameterError(
            f"unknown table1 variant {variant!r}; choose from {sorted(TABLE1_VARIANTS)}"
        )
    model = TABLE1_VARIANTS[variant]
    if fast:
        model = replace(model, p=100)
    reps = replications if replications is not None else (30 if fast else 100)
    return ExperimentConfig(
        model=model,
        n=250,
        scheme=Banding(),
        c_values=(2.0,),
        replications=reps,
        base_seed=base_seed,
        kind="table",
        threads=threads,
    )


def table2_config(
    p: int = 500,
    fast: bool = False,
    replications: int | None = None,
    base_seed: int = 0,
    threads: int = 0,
    unit_diagonal: bool = False,
) -> ExperimentConfig:
    """Benchmark preset: bandwidth selection on the exactly banded model."""
    if fast:
        p = min(p, 100)
    reps = replications if replications is not None else (30 if fast else 100)
    return ExperimentConfig(
        model=BandedUniform(k0=5, offdiag=0.25, p=p, unit_diagonal=unit_diagonal),
        n=250,
        scheme=Banding(),
        c_values=(2.0, "logn"),
        replications=reps,
        base_seed=base_seed,
        kind="consistency",
        threads=threads,
    )
