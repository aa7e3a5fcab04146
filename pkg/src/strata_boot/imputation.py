"""Bootstrap populations built from one observed experiment."""

from dataclasses import dataclass

import numpy as np

from .exceptions import NotSharpEligible
from .experiment import DesignKind


@dataclass(frozen=True, eq=False)
class ImputedPopulation:
    """Imputed potential outcomes aligned with the observed units."""

    stratum: np.ndarray
    y1: np.ndarray
    y0: np.ndarray
    tau_star: float


def _cross_quantile(own_sorted, other_sorted, values):
    """``Other^{-1}(Own(v))`` for each ``v``, in integer rank arithmetic.

    ``Own(v) = c / n_own`` with ``c`` the count of own values ``<= v``, and the
    left-continuous inverse at ``c / n_own`` is order statistic
    ``ceil(c * n_other / n_own)`` of the other sample.
    """
    n_own, n_other = own_sorted.size, other_sorted.size
    c = np.searchsorted(own_sorted, values, side="right")
    idx = -(-c * n_other // n_own) - 1
    return other_sorted[idx]


def rank_preserving_impute(obs):
    """Fill each unit's missing arm with the same-rank quantile of the other arm.

    A treated unit with outcome ``v`` receives control value
    ``F^{-1}(G(v))`` and a control unit receives ``G^{-1}(F(v))``, with ``G``
    and ``F`` the treated and control ECDFs of its stratum (the unit itself
    included). Needs ``2 <= n_m1 <= n_m - 2``.
    """
    if obs.kind is not DesignKind.SHARP_ELIGIBLE:
        raise NotSharpEligible(
            "rank-preserving imputation needs 2 <= n_m1 <= n_m - 2 in every stratum; "
            "it degenerates on paired designs"
        )
    y1 = obs.y.copy()
    y0 = obs.y.copy()
    for idx in obs.stratum_units:
        z = obs.z[idx]
        yi = obs.y[idx]
        t_idx, c_idx = idx[z == 1], idx[z == 0]
        t_sorted = np.sort(yi[z == 1])
        c_sorted = np.sort(yi[z == 0])
        y0[t_idx] = _cross_quantile(t_sorted, c_sorted, obs.y[t_idx])
        y1[c_idx] = _cross_quantile(c_sorted, t_sorted, obs.y[c_idx])
    return ImputedPopulation(obs.stratum, y1, y0, float(np.mean(y1 - y0)))


def copy_counts(n_m, n_mz):
    """Copies of each observed arm value in the rank-preserving imputation.

    ``counts[j-1] = ceil(j * n_m / n_mz) - ceil((j - 1) * n_m / n_mz)`` is the
    number of copies of the j-th *largest* observed value of the arm; see
    :func:`expand_arm`.

    >>> copy_counts(5, 3)
    [2, 2, 1]
    """
    if not 1 <= n_mz <= n_m:
        raise ValueError(f"need 1 <= n_mz <= n_m, got n_m={n_m}, n_mz={n_mz}")
    ceil = [-(-j * n_m // n_mz) for j in range(n_mz + 1)]
    return [b - a for a, b in zip(ceil, ceil[1:])]


def expand_arm(values, n_m):
    """Arm values repeated by :func:`copy_counts`, largest value first, returned ascending.

    Equals the multiset of the corresponding imputed column of
    :func:`rank_preserving_impute` when the values within each arm are distinct.
    Tied values within an arm share one ecdf value and therefore one imputed
    partner, so the two can differ under such ties.
    """
    desc = np.sort(np.asarray(values, dtype=float))[::-1]
    return np.repeat(desc, copy_counts(n_m, desc.size))[::-1]


def constant_effect_impute(obs, delta):
    """Impute the missing arm by shifting the observed outcome by ``delta``."""
    y = obs.y
    z = obs.z
    y1 = y + delta * (1 - z)
    y0 = y - delta * z
    # tau_star is delta by construction; stated exactly rather than averaged.
    return ImputedPopulation(obs.stratum, y1, y0, float(delta))
