"""Brute-force and analytic checkers, kept independent of the fast code paths.

Nothing here reuses the vectorized batch estimators or the merged-breakpoint
integral; the checks enumerate assignments directly or integrate on a grid.
"""

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import binomtest

from .exceptions import DomainError, IdentityViolation
from .experiment import build_blocks, population_truth
from .randomizer import ENUMERATION_LIMIT, draw_assignments, enumerate_assignments

IDENTITY_RTOL = 1e-12
_CHUNK = 4096


def _tol(*values):
    return IDENTITY_RTOL * max(1.0, *(abs(v) for v in values))


def _linear_tau(pop, design):
    """``tau_hat(z) = z @ a + c`` for the stratified difference in means."""
    n1 = np.asarray(design.n_treated, dtype=float)[pop.stratum]
    n0 = np.asarray(design.n_control, dtype=float)[pop.stratum]
    p = design.pi[pop.stratum]
    a = p * (pop.y1 / n1 + pop.y0 / n0)
    c = -float(np.sum(p * pop.y0 / n0))
    return a, c


@dataclass(frozen=True)
class ExactDistribution:
    """Support and probabilities of ``tau_hat`` over all assignments."""

    values: np.ndarray
    probs: np.ndarray
    n_assignments: int
    mean: float
    variance: float  # of sqrt(n) * tau_hat

    def rows(self):
        return list(zip(self.values.tolist(), self.probs.tolist()))

    def __iter__(self):
        return iter(self.rows())

    def __len__(self):
        return self.values.size


def exact_distribution(pop, design, limit=ENUMERATION_LIMIT):
    """Exact randomization distribution of ``tau_hat``; exact float ties are merged.

    Raises
    ------
    TooLargeToEnumerate
    """
    if tuple(pop.sizes.tolist()) != design.n_units:
        raise DomainError("design stratum sizes do not match the population")
    a, c = _linear_tau(pop, design)
    tau = pop.tau
    counts = {}
    total = 0
    s1 = s2 = 0.0
    gen = enumerate_assignments(design, pop.stratum, limit)
    while True:
        chunk = list(itertools.islice(gen, _CHUNK))
        if not chunk:
            break
        vals = np.stack(chunk) @ a + c
        total += vals.size
        d = vals - tau
        s1 += float(d.sum())
        s2 += float(d @ d)
        u, k = np.unique(vals, return_counts=True)
        for v, cnt in zip(u.tolist(), k.tolist()):
            counts[v] = counts.get(v, 0) + cnt
    values = np.array(sorted(counts))
    probs = np.array([counts[v] for v in values.tolist()], dtype=float) / total
    mean = tau + s1 / total
    var = design.n * (s2 / total - (s1 / total) ** 2)
    return ExactDistribution(values, probs, total, mean, var)


def _stratum_exact_variance(y1, y0, n1):
    """``Var(tau_hat_m)`` by enumerating one stratum's assignments."""
    nm = y1.size
    n0 = nm - n1
    vals = []
    for treated in itertools.combinations(range(nm), n1):
        z = np.zeros(nm, dtype=bool)
        z[list(treated)] = True
        vals.append(y1[z].sum() / n1 - y0[~z].sum() / n0)
    vals = np.asarray(vals)
    return float(np.mean((vals - vals.mean()) ** 2))


@dataclass
class IdentityReport:
    tau: float
    mean_tau_hat: float
    variance_exact: float
    sigma2_eq1: float
    sigma2_eq2: float
    sigma2_S: float
    sigma2_comonotone: float
    sigma2_S_comonotone: float
    n_assignments: int
    checks: list = field(default_factory=list)

    @property
    def passed(self):
        return all(ok for _, ok, _ in self.checks)

    def summary(self):
        lines = [f"{'PASS' if ok else 'FAIL'} {name}: {detail}" for name, ok, detail in self.checks]
        lines.append("PASS" if self.passed else "FAIL")
        return "\n".join(lines)


def verify_variance_identities(pop, design, raise_on_failure=True, limit=ENUMERATION_LIMIT):
    """Check the closed-form variances against exhaustive enumeration.

    Checks unbiasedness of ``tau_hat``, both closed forms of
    ``Var(sqrt(n) tau_hat)``, the per-stratum variance formula, the sharp
    bound ``sigma2 <= sigma2_S`` and its equality after co-monotone recoupling.

    Raises
    ------
    IdentityViolation
        On the first failed check when ``raise_on_failure`` is true.
    TooLargeToEnumerate
    """
    dist = exact_distribution(pop, design, limit)
    truth = population_truth(pop, design)
    como = population_truth(pop.comonotone(), design)
    rep = IdentityReport(
        tau=truth.tau,
        mean_tau_hat=dist.mean,
        variance_exact=dist.variance,
        sigma2_eq1=truth.sigma2,
        sigma2_eq2=truth.sigma2_eq2,
        sigma2_S=truth.sigma2_S,
        sigma2_comonotone=como.sigma2,
        sigma2_S_comonotone=como.sigma2_S,
        n_assignments=dist.n_assignments,
    )

    def check(name, ok, detail, stratum=None):
        rep.checks.append((name, bool(ok), detail))
        if not ok and raise_on_failure:
            raise IdentityViolation(f"{name}: {detail}", stratum)

    check("unbiased", abs(dist.mean - truth.tau) <= _tol(truth.tau),
          f"E[tau_hat]={dist.mean!r} tau={truth.tau!r}")
    check("eq1", abs(dist.variance - truth.sigma2) <= _tol(dist.variance),
          f"exact={dist.variance!r} eq1={truth.sigma2!r}")
    check("eq2", abs(dist.variance - truth.sigma2_eq2) <= _tol(dist.variance),
          f"exact={dist.variance!r} eq2={truth.sigma2_eq2!r}")
    for m, (idx, st) in enumerate(zip(pop.stratum_units, truth.strata)):
        label = pop.labels[m]
        v = _stratum_exact_variance(pop.y1[idx], pop.y0[idx], st.n1)
        closed = st.S2_1 / st.n1 + st.S2_0 / (st.n_m - st.n1) - st.S2_tau / st.n_m
        check(f"stratum {label} variance", abs(v - closed) <= _tol(v),
              f"exact={v!r} formula={closed!r}", label)
        check(f"stratum {label} sharp bound", st.S_10 <= st.S_U + _tol(st.S_U),
              f"S10={st.S_10!r} SU={st.S_U!r}", label)
    check("sharp bound", truth.sigma2 <= truth.sigma2_S + _tol(truth.sigma2_S),
          f"sigma2={truth.sigma2!r} sigma2_S={truth.sigma2_S!r}")
    check("comonotone equality", abs(como.sigma2 - como.sigma2_S) <= _tol(como.sigma2_S),
          f"sigma2={como.sigma2!r} sigma2_S={como.sigma2_S!r}")
    return rep


def riemann_integral_oracle(g, f, grid=10**5):
    """Midpoint-rule value of ``int_0^1 G^{-1}(u) F^{-1}(u) du``."""
    if grid < 10**4:
        raise DomainError("grid must be at least 10^4")
    u = (np.arange(grid) + 0.5) / grid
    gs, fs = g.sorted_values, f.sorted_values
    gq = gs[np.clip(np.ceil(u * gs.size).astype(np.intp) - 1, 0, gs.size - 1)]
    fq = fs[np.clip(np.ceil(u * fs.size).astype(np.intp) - 1, 0, fs.size - 1)]
    return float(np.mean(gq * fq))


def concentration_weight(design, arm="treated"):
    """``sum_m pi_m n_m0 n_m / (n_m1 (n_m + 2))``, arm counts swapped for ``arm="control"``."""
    if arm not in ("treated", "control"):
        raise DomainError("arm must be 'treated' or 'control'")
    nm = np.asarray(design.n_units, dtype=float)
    n1 = np.asarray(design.n_treated, dtype=float)
    n0 = nm - n1
    if arm == "control":
        n1, n0 = n0, n1
    return float(np.sum(design.pi * n0 * nm / (n1 * (nm + 2))))


def concentration_bound(design, epsilon, arm="treated", two_sided=False):
    """Tail bound ``n exp(-n eps^2 / (4 w))`` on the weighted ECDF sup-deviation.

    ``w`` is :func:`concentration_weight`. The two-sided variant doubles the
    one-sided bound.
    """
    if not epsilon > 0:
        raise DomainError("epsilon must be positive")
    n = design.n
    w = concentration_weight(design, arm)
    bound = n * math.exp(-n * epsilon**2 / (4 * w))
    return 2 * bound if two_sided else bound


def sup_deviations(pop, design, draws, seed, arm="treated", two_sided=False):
    """``sup_y sum_m pi_m (Ghat_m(y) - G_m(y))`` for ``draws`` random assignments.

    Both step functions jump only at population values, so the supremum is
    taken over those points (and the value 0 below the minimum).
    """
    y = pop.y1 if arm == "treated" else pop.y0
    grid = np.unique(y)
    below = (y[:, None] <= grid[None, :]).astype(float)
    s = pop.stratum
    pi = design.pi[s]
    sizes = np.asarray(design.n_units, dtype=float)[s]
    arm_n = np.asarray(design.n_treated if arm == "treated" else design.n_control, dtype=float)[s]
    pop_cdf = (pi / sizes) @ below
    blocks = build_blocks(s, design)
    out = np.empty(draws)
    for start in range(0, draws, _CHUNK):
        stop = min(start + _CHUNK, draws)
        z = draw_assignments(design, blocks, seed, range(start, stop)).astype(float)
        if arm == "control":
            z = 1.0 - z
        dev = (z * (pi / arm_n)) @ below - pop_cdf
        if two_sided:
            dev = np.abs(dev)
        out[start:stop] = np.maximum(dev.max(axis=1), 0.0)
    return out


@dataclass(frozen=True)
class TailCheck:
    """Monte Carlo tail frequency at ``epsilon`` next to the bound.

    ``passed`` means the observed tail frequency does not exceed an
    informative bound. ``conclusive`` additionally requires the Wilson upper
    limit to lie below the bound, which needs roughly ``draws > 5 / bound``.
    """

    epsilon: float
    bound: float
    tail: float
    wilson_lower: float
    wilson_upper: float
    draws: int

    @property
    def informative(self):
        return self.bound <= 1.0

    @property
    def passed(self):
        return not self.informative or self.tail <= self.bound

    @property
    def conclusive(self):
        return self.informative and self.wilson_upper <= self.bound


def check_concentration(pop, design, epsilons, draws=10**4, seed=0, arm="treated",
                        two_sided=False, confidence=0.99):
    """Monte Carlo tail ``P(sup-deviation >= eps)`` next to the bound, per ``eps``."""
    sup = sup_deviations(pop, design, draws, seed, arm, two_sided)
    out = []
    for eps in epsilons:
        k = int(np.sum(sup >= eps))
        ci = binomtest(k, draws).proportion_ci(confidence, method="wilson")
        out.append(TailCheck(
            float(eps), concentration_bound(design, eps, arm, two_sided),
            k / draws, float(ci.low), float(ci.high), draws,
        ))
    return out
