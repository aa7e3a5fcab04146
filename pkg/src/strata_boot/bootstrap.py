"""Causal bootstrap with percentile-t intervals.

Replicate ``b`` always uses randomization stream ``b`` of the bootstrap seed
and replicates are processed in fixed-size chunks, so results are
bit-identical for any worker count. Set ``STRATA_BOOT_THREADS`` to bound the
number of worker threads (default: all cores).
"""

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .ecdf import snapped_ceil
from .estimators import (
    ConfidenceInterval,
    batch_statistics,
    diff_in_means,
    neyman_variance,
    paired_variance,
    sharp_variance,
    wald_ci,
)
from .exceptions import (
    DegenerateBootstrap,
    DomainError,
    EmptySample,
    NotPaired,
    NotSharpEligible,
    TooFewPairs,
)
from .experiment import DesignKind
from .imputation import constant_effect_impute, rank_preserving_impute
from .randomizer import block_permutations, fresh_seed, replicate_uniforms

DEFAULT_B = 1000
MIN_B = 100
MAX_DEGENERATE_FRACTION = 0.01
CHUNK_SIZE = 128
# A replicate variance at or below this fraction of the outcome scale counts as zero.
_DEGENERATE_RTOL = 1e-12

METHODS = ("neyman-normal", "sharp-normal", "sharp-boot", "pair-normal", "pair-boot")


def worker_count():
    env = os.environ.get("STRATA_BOOT_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def map_chunks(func, n_items, threads=None, chunk_size=CHUNK_SIZE):
    """Apply ``func(start, stop)`` over fixed chunks of ``range(n_items)``, results in order."""
    bounds = [(s, min(s + chunk_size, n_items)) for s in range(0, n_items, chunk_size)]
    threads = worker_count() if threads is None else threads
    if threads <= 1 or len(bounds) <= 1:
        return [func(a, b) for a, b in bounds]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda ab: func(*ab), bounds))


@dataclass(frozen=True)
class BootstrapResult:
    t_stats: np.ndarray
    n_degenerate: int
    q_lo: float
    q_hi: float
    alpha: float
    B: int
    seed: int
    tau_star: float
    kind: str

    def __post_init__(self):
        assert self.n_degenerate + self.t_stats.size == self.B


def empirical_quantile(sorted_stats, p):
    """The ``ceil(K * p)``-th order statistic of ``K`` sorted values."""
    K = len(sorted_stats)
    if K == 0:
        raise EmptySample("no statistics to take a quantile of")
    if not 0 < p < 1:
        raise DomainError(f"quantile level must lie in (0, 1), got {p}")
    k = min(max(snapped_ceil(K * p), 1), K)
    return float(sorted_stats[k - 1])


def _replicate_statistics(obs, y1, y0, B, seed, variance, threads):
    design, blocks = obs.design, obs.blocks
    n_draws = sum(design.n_treated)

    def run(start, stop):
        u = replicate_uniforms(seed, range(start, stop), n_draws)
        perms = [block_permutations(b, u) for b in blocks]
        stats = batch_statistics(
            blocks, y1, y0, perms, design,
            sharp=variance == "sharp", paired=variance == "paired",
        )
        return stats.tau_hat, getattr(stats, variance)

    parts = map_chunks(run, B, threads)
    return (
        np.concatenate([p[0] for p in parts]),
        np.concatenate([p[1] for p in parts]),
    )


def _summarize(tau_hat_star, sigma2_star, imputed, n, B, alpha, seed, kind):
    scale = float(np.mean(imputed.y1**2 + imputed.y0**2)) / 2
    ok = sigma2_star > _DEGENERATE_RTOL * scale
    n_degenerate = int(B - ok.sum())
    if n_degenerate > MAX_DEGENERATE_FRACTION * B:
        raise DegenerateBootstrap(n_degenerate, B)
    t = math.sqrt(n) * (tau_hat_star[ok] - imputed.tau_star) / np.sqrt(sigma2_star[ok])
    ts = np.sort(t)
    return BootstrapResult(
        t_stats=t,
        n_degenerate=n_degenerate,
        q_lo=empirical_quantile(ts, alpha / 2),
        q_hi=empirical_quantile(ts, 1 - alpha / 2),
        alpha=alpha,
        B=B,
        seed=seed,
        tau_star=imputed.tau_star,
        kind=kind,
    )


def _check_args(B, alpha):
    if B < MIN_B:
        raise DomainError(f"need at least {MIN_B} bootstrap replicates, got {B}")
    if not 0 < alpha < 1:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")


def bootstrap_stratified(obs, B=DEFAULT_B, alpha=0.05, seed=None, threads=None):
    """Rank-preserving causal bootstrap of the sharp t-statistic.

    Imputes a co-monotone population, redraws stratified assignments and
    studentizes each replicate by its own sharp variance estimate.
    Replicates with zero estimated variance are dropped and counted.

    Raises
    ------
    NotSharpEligible
    DegenerateBootstrap
        If more than 1% of the replicates are degenerate.
    """
    _check_args(B, alpha)
    if obs.kind is not DesignKind.SHARP_ELIGIBLE:
        raise NotSharpEligible(
            "the rank-preserving bootstrap needs 2 <= n_m1 <= n_m - 2 in every stratum"
        )
    seed = fresh_seed() if seed is None else int(seed)
    imputed = rank_preserving_impute(obs)
    tau, s2 = _replicate_statistics(obs, imputed.y1, imputed.y0, B, seed, "sharp", threads)
    return _summarize(tau, s2, imputed, obs.n, B, alpha, seed, "rank-preserving")


def bootstrap_paired(obs, B=DEFAULT_B, alpha=0.05, seed=None, delta=None, threads=None):
    """Constant-effect causal bootstrap of the paired t-statistic.

    ``delta`` defaults to the observed difference in means.
    """
    _check_args(B, alpha)
    if obs.kind is not DesignKind.PAIRED:
        raise NotPaired("the constant-effect bootstrap is defined for paired designs")
    if obs.M < 2:
        raise TooFewPairs("need at least two pairs")
    seed = fresh_seed() if seed is None else int(seed)
    if delta is None:
        delta = diff_in_means(obs).tau_hat
    imputed = constant_effect_impute(obs, delta)
    tau, s2 = _replicate_statistics(obs, imputed.y1, imputed.y0, B, seed, "paired", threads)
    return _summarize(tau, s2, imputed, obs.n, B, alpha, seed, "constant-effect")


def percentile_t_ci(tau_hat, sigma_hat, n, boot, method_tag="percentile-t"):
    """``(tau_hat - sigma_hat * q_hi / sqrt(n), tau_hat - sigma_hat * q_lo / sqrt(n))``."""
    if sigma_hat < 0:
        raise DomainError("sigma_hat must be non-negative")
    root_n = math.sqrt(n)
    return ConfidenceInterval(
        tau_hat - sigma_hat * boot.q_hi / root_n,
        tau_hat - sigma_hat * boot.q_lo / root_n,
        boot.alpha,
        method_tag,
    )


@dataclass
class AnalysisResult:
    method: str
    alpha: float
    seed: Optional[int]
    n: int
    M: int
    design_kind: str
    strata: tuple
    tau_hat: float
    tau_hat_per_stratum: tuple
    weights: tuple
    variances: dict
    ci: Optional[ConfidenceInterval]
    bootstrap: Optional[BootstrapResult] = None
    diagnostics: dict = field(default_factory=dict)


_REQUIRED_KIND = {
    "sharp-normal": DesignKind.SHARP_ELIGIBLE,
    "sharp-boot": DesignKind.SHARP_ELIGIBLE,
    "pair-normal": DesignKind.PAIRED,
    "pair-boot": DesignKind.PAIRED,
}


def analyze(obs, method, alpha=0.05, B=DEFAULT_B, seed=None, delta=None,
            threads=None, strict=True):
    """Point estimate, variance and interval for one method.

    With ``strict=False`` a degenerate bootstrap is reported in
    ``diagnostics`` (and ``ci`` is ``None``) instead of raised.
    """
    if method not in METHODS:
        raise DomainError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
    kind = obs.kind
    need = _REQUIRED_KIND.get(method)
    if need is not None and kind is not need:
        err = NotPaired if need is DesignKind.PAIRED else NotSharpEligible
        raise err(
            f"method {method} requires a {need.value} design but the data form a "
            f"{kind.value} design"
        )
    if method.endswith("-boot") and seed is None:
        seed = fresh_seed()

    est = diff_in_means(obs)
    if method == "neyman-normal":
        rep = neyman_variance(obs)
    elif method.startswith("sharp"):
        rep = sharp_variance(obs)
    else:
        rep = paired_variance(obs)
    variances = {rep.method: rep.sigma2_hat}
    if kind is DesignKind.SHARP_ELIGIBLE and rep.method == "sharp":
        variances["neyman"] = neyman_variance(obs).sigma2_hat

    boot = None
    diagnostics = {"status": "ok"}
    if method.endswith("-normal"):
        ci = wald_ci(est.tau_hat, rep.sigma2_hat, obs.n, alpha, method)
    else:
        try:
            if method == "sharp-boot":
                boot = bootstrap_stratified(obs, B, alpha, seed, threads)
            else:
                boot = bootstrap_paired(obs, B, alpha, seed, delta, threads)
        except DegenerateBootstrap as exc:
            if strict:
                raise
            ci = None
            diagnostics = {
                "status": "degenerate",
                "n_degenerate": exc.n_degenerate,
                "B": exc.B,
                "message": str(exc),
            }
        else:
            ci = percentile_t_ci(est.tau_hat, rep.sigma_hat, obs.n, boot, method)
            diagnostics["n_degenerate"] = boot.n_degenerate
        if method == "pair-boot":
            diagnostics["delta"] = est.tau_hat if delta is None else float(delta)

    return AnalysisResult(
        method=method,
        alpha=alpha,
        seed=seed,
        n=obs.n,
        M=obs.M,
        design_kind=kind.value,
        strata=obs.labels,
        tau_hat=est.tau_hat,
        tau_hat_per_stratum=est.tau_hat_per_stratum,
        weights=est.weights,
        variances=variances,
        ci=ci,
        bootstrap=boot,
        diagnostics=diagnostics,
    )
