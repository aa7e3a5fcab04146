"""Point and variance estimators for the stratified difference in means.

All variances are reported on the scale of ``Var(sqrt(n) * (tau_hat - tau))``;
interval builders divide by ``sqrt(n)`` exactly once.

Two code paths compute the same quantities:

* ``diff_in_means`` / ``neyman_variance`` / ``sharp_variance`` /
  ``paired_variance`` work stratum by stratum on one observed experiment.
* ``batch_statistics`` evaluates them for many assignment vectors at once
  over a fixed pair of potential-outcome vectors; the bootstrap and the
  simulation harness use it.
"""

import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .ecdf import Ecdf, comonotone_covariance, merged_breakpoints
from .exceptions import (
    DomainError,
    InsufficientArm,
    NotPaired,
    NotSharpEligible,
    TooFewPairs,
)
from .experiment import DesignKind


class EstimandReport(NamedTuple):
    tau_hat: float
    tau_hat_per_stratum: tuple
    weights: tuple


class StratumVariance(NamedTuple):
    S2_1: float
    S2_0: float
    sU: Optional[float] = None


@dataclass(frozen=True)
class VarianceReport:
    tau_hat: float
    sigma2_hat: float
    method: str
    per_stratum: tuple = ()

    @property
    def sigma_hat(self):
        return math.sqrt(max(self.sigma2_hat, 0.0))


@dataclass(frozen=True)
class ConfidenceInterval:
    lower: float
    upper: float
    alpha: float
    method_tag: str

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise DomainError(f"alpha must lie in (0, 1), got {self.alpha}")

    @property
    def length(self):
        return self.upper - self.lower

    def covers(self, value):
        return self.lower <= value <= self.upper


# Wichura (1988), algorithm AS 241, PPND16.
_A = (
    3.387132872796366608, 133.14166789178437745, 1971.5909503065514427,
    13731.693765509461125, 45921.953931549871457, 67265.770927008700853,
    33430.575583588128105, 2509.0809287301226727,
)
_B = (
    1.0, 42.313330701600911252, 687.1870074920579083, 5394.1960214247511077,
    21213.794301586595867, 39307.89580009271061, 28729.085735721942674,
    5226.495278852545925,
)
_C = (
    1.42343711074968357734, 4.6303378461565452959, 5.7694972214606914055,
    3.64784832476320460504, 1.27045825245236838258, 0.24178072517745061177,
    0.0227238449892691845833, 7.7454501427834140764e-4,
)
_D = (
    1.0, 2.05319162663775882187, 1.6763848301838038494, 0.68976733498510000455,
    0.14810397642748007459, 0.0151986665636164571966, 5.475938084995344946e-4,
    1.05075007164441684324e-9,
)
_E = (
    6.6579046435011037772, 5.4637849111641143699, 1.7848265399172913358,
    0.29656057182850489123, 0.026532189526576123093, 0.0012426609473880784386,
    2.71155556874348757815e-5, 2.01033439929228813265e-7,
)
_F = (
    1.0, 0.59983220655588793769, 0.13692988092273580531, 0.0148753612908506148525,
    7.868691311456132591e-4, 1.8463183175100546818e-5, 1.4215117583164458887e-7,
    2.04426310338993978564e-15,
)


def _poly(coef, x):
    acc = 0.0
    for c in reversed(coef):
        acc = acc * x + c
    return acc


def normal_quantile(p):
    """Standard normal inverse CDF (Wichura's AS 241, about 1e-16 relative accuracy)."""
    p = float(p)
    if not 0.0 < p < 1.0:
        raise DomainError(f"normal quantile needs 0 < p < 1, got {p!r}")
    q = p - 0.5
    if abs(q) <= 0.425:
        r = 0.180625 - q * q
        return q * _poly(_A, r) / _poly(_B, r)
    r = p if q < 0 else 1.0 - p
    r = math.sqrt(-math.log(r))
    if r <= 5.0:
        r -= 1.6
        val = _poly(_C, r) / _poly(_D, r)
    else:
        r -= 5.0
        val = _poly(_E, r) / _poly(_F, r)
    return -val if q < 0 else val


def _sample_var(x):
    d = x - x.mean()
    return float(d @ d / (x.size - 1))


def diff_in_means(obs):
    """Stratum-size weighted difference in means."""
    taus = []
    for m in range(obs.M):
        t, c = obs.arm_values(m)
        taus.append(float(t.mean() - c.mean()))
    pi = obs.pi
    return EstimandReport(
        float(np.dot(pi, taus)), tuple(taus), tuple(pi.tolist())
    )


def neyman_variance(obs):
    """Neyman-type conservative variance estimate.

    Raises
    ------
    InsufficientArm
        If some arm of some stratum has fewer than two units.
    """
    design = obs.design
    if min(min(design.n_treated), min(design.n_control)) < 2:
        raise InsufficientArm(
            "the Neyman estimator needs at least two treated and two control "
            "units per stratum; use paired_variance for paired designs"
        )
    est = diff_in_means(obs)
    n = obs.n
    total = 0.0
    per = []
    for m in range(obs.M):
        t, c = obs.arm_values(m)
        s1, s0 = _sample_var(t), _sample_var(c)
        p = est.weights[m]
        total += n * p * p * (s1 / t.size + s0 / c.size)
        per.append(StratumVariance(s1, s0))
    return VarianceReport(est.tau_hat, total, "neyman", tuple(per))


def sharp_upper_covariance(treated, control):
    """Sample sharp bound ``s^U`` on the within-stratum covariance of potential outcomes."""
    nm = treated.size + control.size
    return nm / (nm - 1) * comonotone_covariance(Ecdf(treated), Ecdf(control))


def sharp_variance(obs):
    """Sharp variance estimate built from co-monotone coupling of the arm ECDFs.

    Requires ``2 <= n_m1 <= n_m - 2`` in every stratum.
    """
    if obs.kind is not DesignKind.SHARP_ELIGIBLE:
        raise NotSharpEligible(
            "the sharp variance estimator needs 2 <= n_m1 <= n_m - 2 in every stratum"
        )
    est = diff_in_means(obs)
    total = 0.0
    per = []
    for m in range(obs.M):
        t, c = obs.arm_values(m)
        n1, n0 = t.size, c.size
        s1, s0 = _sample_var(t), _sample_var(c)
        sU = sharp_upper_covariance(t, c)
        total += est.weights[m] * (n0 / n1 * s1 + n1 / n0 * s0 + 2 * sU)
        per.append(StratumVariance(s1, s0, sU))
    if total < 0:
        warnings.warn(f"sharp variance estimate is negative ({total!r})", RuntimeWarning)
    return VarianceReport(est.tau_hat, total, "sharp", tuple(per))


def paired_variance(obs):
    """Neyman-type variance for paired experiments, ``2 * sum (tau_m - tau)^2 / (M - 1)``."""
    if obs.kind is not DesignKind.PAIRED:
        raise NotPaired("paired_variance needs every stratum to be one treated/one control pair")
    if obs.M < 2:
        raise TooFewPairs("paired_variance needs at least two pairs")
    est = diff_in_means(obs)
    taus = np.asarray(est.tau_hat_per_stratum)
    dev = taus - taus.mean()
    return VarianceReport(est.tau_hat, float(2 * dev @ dev / (obs.M - 1)), "paired")


def wald_ci(tau_hat, sigma2_hat, n, alpha=0.05, method_tag="wald"):
    """Normal-approximation interval ``tau_hat -/+ z_{1-alpha/2} * sigma_hat / sqrt(n)``."""
    if sigma2_hat < 0:
        raise DomainError("variance must be non-negative")
    z = normal_quantile(1 - alpha / 2)
    sigma = math.sqrt(sigma2_hat)
    root_n = math.sqrt(n)
    return ConfidenceInterval(
        tau_hat - sigma * z / root_n, tau_hat - sigma * -z / root_n, alpha, method_tag
    )


class BatchStats(NamedTuple):
    tau_hat: np.ndarray
    tau_m: np.ndarray
    neyman: Optional[np.ndarray]
    sharp: Optional[np.ndarray]
    paired: Optional[np.ndarray]


def batch_statistics(blocks, y1, y0, perms, design, neyman=False, sharp=False, paired=False):
    """Estimators for many assignments of one population at once.

    Parameters
    ----------
    blocks : sequence of Block
    y1, y0 : ndarray, shape (n,)
        Potential outcomes (observed or imputed).
    perms : sequence of ndarray, shape (R, M_g, n_m)
        Within-stratum permutations per block; leading ``n1`` positions are treated.
    design : StratifiedDesign
    neyman, sharp, paired : bool
        Which variance estimators to evaluate.
    """
    R = perms[0].shape[0]
    n = design.n
    tau_m = np.empty((R, design.M))
    ney = np.empty((R, design.M)) if neyman else None
    shp = np.empty((R, design.M)) if sharp else None
    for block, perm in zip(blocks, perms):
        n_m, n1, n0 = block.n_m, block.n1, block.n0
        p = n_m / n
        shape = perm.shape
        t = np.take_along_axis(np.broadcast_to(y1[block.units], shape), perm[..., :n1], -1)
        c = np.take_along_axis(np.broadcast_to(y0[block.units], shape), perm[..., n1:], -1)
        tc = t - t.mean(axis=-1, keepdims=True)
        cc = c - c.mean(axis=-1, keepdims=True)
        cols = block.strata
        tau_m[:, cols] = t.mean(axis=-1) - c.mean(axis=-1)
        if neyman or sharp:
            s1 = (tc * tc).sum(axis=-1) / (n1 - 1)
            s0 = (cc * cc).sum(axis=-1) / (n0 - 1)
        if neyman:
            ney[:, cols] = n * p * p * (s1 / n1 + s0 / n0)
        if sharp:
            w, gi, fi, lcm = merged_breakpoints(n1, n0)
            tc.sort(axis=-1)
            cc.sort(axis=-1)
            cov = (w * tc[..., gi] * cc[..., fi]).sum(axis=-1) / lcm
            sU = n_m / (n_m - 1) * cov
            shp[:, cols] = p * (n0 / n1 * s1 + n1 / n0 * s0 + 2 * sU)
    pi = design.pi
    tau_hat = (tau_m * pi).sum(axis=1)
    pair = None
    if paired:
        dev = tau_m - tau_hat[:, None]
        pair = 2 * (dev * dev).sum(axis=1) / (design.M - 1)
    return BatchStats(
        tau_hat,
        tau_m,
        ney.sum(axis=1) if neyman else None,
        shp.sum(axis=1) if sharp else None,
        pair,
    )


def observed_permutations(obs):
    """Per-block permutations reproducing the observed assignment (treated first)."""
    perms = []
    for block in obs.blocks:
        zb = obs.z[block.units]
        perms.append(np.argsort(1 - zb, axis=-1, kind="stable")[None, ...])
    return perms
