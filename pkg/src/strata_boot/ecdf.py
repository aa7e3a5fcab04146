"""Empirical distribution functions and their left-continuous inverses.

The quantile convention is ``F^{-1}(u) = inf{y : F(y) >= u}`` on ``(0, 1]``, so
at a breakpoint ``u = k/n`` the inverse returns the k-th order statistic.
Integrals of products of two quantile functions are evaluated exactly over
the merged breakpoint grid; no quadrature is involved.
"""

from functools import lru_cache
from math import gcd

import numpy as np

from .exceptions import DomainError, EmptySample, NonFiniteOutcome

# Relative slack used when a float product u * n lands next to an integer.
_SNAP = 1e-9


def snapped_ceil(x):
    """``ceil(x)``, treating values within rounding noise of an integer as that integer."""
    r = round(x)
    if abs(x - r) <= _SNAP * max(1.0, abs(x)):
        return int(r)
    return int(np.ceil(x))


class Ecdf:
    """Right-continuous empirical CDF of a finite sample.

    Parameters
    ----------
    values : array_like
        Non-empty sample of finite reals. Sorted once at construction.
    """

    __slots__ = ("sorted_values",)

    def __init__(self, values):
        arr = np.asarray(values, dtype=float).ravel()
        if arr.size == 0:
            raise EmptySample("cannot build an ECDF from an empty sample")
        if not np.all(np.isfinite(arr)):
            raise NonFiniteOutcome("ECDF sample contains NaN or infinite values")
        arr = np.sort(arr, kind="stable")
        arr.flags.writeable = False
        self.sorted_values = arr

    @property
    def n(self):
        return self.sorted_values.size

    def count_le(self, y):
        """Number of sample points ``<= y``."""
        return np.searchsorted(self.sorted_values, y, side="right")

    def __call__(self, y):
        out = self.count_le(y) / self.n
        return float(out) if np.ndim(out) == 0 else out

    def quantile(self, u):
        return quantile(self, u)

    def quantile_at(self, k, den):
        """Exact inverse at the rational point ``k / den`` (``0 < k <= den``)."""
        if not 0 < k <= den:
            raise DomainError(f"quantile level {k}/{den} outside (0, 1]")
        idx = -(-k * self.n // den) - 1
        return float(self.sorted_values[idx])

    @property
    def inverse(self):
        return QuantileFn(self)

    def __repr__(self):
        return f"Ecdf(n={self.n})"


class QuantileFn:
    """Left-continuous inverse of an :class:`Ecdf`, callable on ``(0, 1]``."""

    __slots__ = ("ecdf",)

    def __init__(self, ecdf):
        self.ecdf = ecdf

    def __call__(self, u):
        return quantile(self.ecdf, u)


def ecdf_from_sample(values):
    return Ecdf(values)


def quantile(ecdf, u):
    """Return ``inf{y : F(y) >= u}`` for ``u`` in ``(0, 1]``.

    Examples
    --------
    >>> quantile(Ecdf([2, 4]), 0.5)
    2.0
    >>> quantile(Ecdf([2, 4]), 0.50001)
    4.0
    """
    u = float(u)
    if not 0.0 < u <= 1.0:
        raise DomainError(f"quantile level {u!r} outside (0, 1]")
    k = min(max(snapped_ceil(u * ecdf.n), 1), ecdf.n)
    return float(ecdf.sorted_values[k - 1])


@lru_cache(maxsize=256)
def merged_breakpoints(n_g, n_f):
    """Segment lengths and order-statistic indices for a product of two quantile functions.

    Over ``(0, 1]`` the breakpoints ``{j/n_g} U {k/n_f}`` split the unit
    interval into segments on which both inverses are constant. Returns
    ``(lengths, g_index, f_index, lcm)`` with integer segment lengths summing
    to ``lcm`` such that
    ``int_0^1 G^{-1} F^{-1} du == sum(lengths * g[g_index] * f[f_index]) / lcm``
    for sorted samples ``g`` and ``f``.
    """
    if n_g < 1 or n_f < 1:
        raise EmptySample("both samples must be non-empty")
    lcm = n_g * n_f // gcd(n_g, n_f)
    points = np.union1d(
        np.arange(1, n_g + 1) * (lcm // n_g), np.arange(1, n_f + 1) * (lcm // n_f)
    )
    lengths = np.diff(points, prepend=0)
    # On (p_{t-1}, p_t] the inverse equals the order statistic ceil(p_t * n / lcm).
    g_index = -(-points * n_g // lcm) - 1
    f_index = -(-points * n_f // lcm) - 1
    for arr in (lengths, g_index, f_index):
        arr.flags.writeable = False
    return lengths, g_index, f_index, lcm


def quantile_product_integral(g, f):
    """Exact value of ``int_0^1 G^{-1}(u) F^{-1}(u) du`` for two ECDFs."""
    w, gi, fi, lcm = merged_breakpoints(g.n, f.n)
    return float(np.dot(w, g.sorted_values[gi] * f.sorted_values[fi]) / lcm)


def comonotone_covariance(g, f):
    """``int_0^1 (G^{-1} - mean_g)(F^{-1} - mean_f) du``.

    Algebraically equal to ``quantile_product_integral(g, f) - mean_g * mean_f``
    but free of the cancellation in that difference.
    """
    w, gi, fi, lcm = merged_breakpoints(g.n, f.n)
    gv = g.sorted_values - g.sorted_values.mean()
    fv = f.sorted_values - f.sorted_values.mean()
    return float(np.dot(w, gv[gi] * fv[fi]) / lcm)


def frechet_upper_joint(g, f, y1, y0):
    """Frechet-Hoeffding upper joint CDF ``min(G(y1), F(y0))``."""
    return min(g(y1), f(y0))
