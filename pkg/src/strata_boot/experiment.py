"""Populations, designs and observed experiments.

Stratum labels of any hashable type are encoded as dense integer codes
``0..M-1`` in order of first appearance; the original labels are kept on the
object for reporting.
"""

from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from math import comb, prod
from typing import NamedTuple

import numpy as np

from .ecdf import Ecdf, comonotone_covariance
from .exceptions import (
    EmptyStratumArm,
    InputError,
    NonFiniteOutcome,
    SingletonStratum,
)


class DesignKind(str, Enum):
    PAIRED = "paired"
    SHARP_ELIGIBLE = "sharp-eligible"
    OTHER = "other"


def encode_strata(labels):
    """Map arbitrary stratum labels to codes ``0..M-1`` by first appearance.

    Returns ``(codes, unique_labels)``.
    """
    labels = np.asarray(labels)
    if labels.ndim != 1:
        raise InputError("stratum labels must be one-dimensional")
    uniq, first, inverse = np.unique(labels, return_index=True, return_inverse=True)
    order = np.argsort(first, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(order.size)
    codes = rank[inverse].astype(np.intp)
    return codes, tuple(uniq[order].tolist())


def _readonly(arr):
    arr = np.array(arr, copy=True)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class StratifiedDesign:
    """Stratum sizes ``n_m`` and treated counts ``n_m1``."""

    n_units: tuple
    n_treated: tuple

    def __post_init__(self):
        n_units = tuple(int(v) for v in self.n_units)
        n_treated = tuple(int(v) for v in self.n_treated)
        if not n_units or len(n_units) != len(n_treated):
            raise InputError("design needs one (n_m, n_m1) pair per stratum")
        for m, (nm, n1) in enumerate(zip(n_units, n_treated)):
            if not 1 <= n1 <= nm - 1:
                raise EmptyStratumArm(
                    f"stratum {m}: need 1 <= n_m1 <= n_m - 1, got n_m={nm}, n_m1={n1}"
                )
        object.__setattr__(self, "n_units", n_units)
        object.__setattr__(self, "n_treated", n_treated)

    @classmethod
    def uniform(cls, M, n_m, n_m1):
        return cls((n_m,) * M, (n_m1,) * M)

    @property
    def M(self):
        return len(self.n_units)

    @property
    def n(self):
        return sum(self.n_units)

    @property
    def n_control(self):
        return tuple(nm - n1 for nm, n1 in zip(self.n_units, self.n_treated))

    @property
    def pi(self):
        return np.asarray(self.n_units, dtype=float) / self.n

    @property
    def rho(self):
        return np.asarray(self.n_treated, dtype=float) / np.asarray(self.n_units)

    @property
    def kind(self):
        return classify_design(self)

    @property
    def n_assignments(self):
        return prod(comb(nm, n1) for nm, n1 in zip(self.n_units, self.n_treated))


def classify_design(design):
    pairs = list(zip(design.n_units, design.n_treated))
    if all(nm == 2 and n1 == 1 for nm, n1 in pairs):
        return DesignKind.PAIRED
    if all(2 <= n1 <= nm - 2 for nm, n1 in pairs):
        return DesignKind.SHARP_ELIGIBLE
    return DesignKind.OTHER


@dataclass(frozen=True)
class Block:
    """Strata sharing one ``(n_m, n_m1)`` shape, stacked for vectorized work.

    ``units[g, k]`` is the index (into the unit arrays) of the k-th unit of the
    g-th stratum in this block, in input order. ``draw_offsets[g]`` is where
    that stratum's uniforms start in a replicate's draw vector.
    """

    strata: np.ndarray
    units: np.ndarray
    draw_offsets: np.ndarray
    n_m: int
    n1: int

    @property
    def n0(self):
        return self.n_m - self.n1


def build_blocks(codes, design):
    """Group strata by shape. Blocks are ordered by their first stratum code."""
    members = [[] for _ in range(design.M)]
    for i, c in enumerate(np.asarray(codes).tolist()):
        members[c].append(i)
    offsets = np.concatenate([[0], np.cumsum(design.n_treated)[:-1]])
    shapes = {}
    for m, (nm, n1) in enumerate(zip(design.n_units, design.n_treated)):
        shapes.setdefault((nm, n1), []).append(m)
    blocks = []
    for (nm, n1), strata in shapes.items():
        strata = np.asarray(strata, dtype=np.intp)
        blocks.append(
            Block(
                strata=_readonly(strata),
                units=_readonly(np.asarray([members[m] for m in strata], dtype=np.intp)),
                draw_offsets=_readonly(offsets[strata]),
                n_m=nm,
                n1=n1,
            )
        )
    return tuple(blocks)


class _StrataMixin:
    @cached_property
    def M(self):
        return len(self.labels)

    @property
    def n(self):
        return self.stratum.size

    @cached_property
    def sizes(self):
        return np.bincount(self.stratum, minlength=self.M)

    @property
    def pi(self):
        return self.sizes / self.n

    @cached_property
    def stratum_units(self):
        """Unit indices of each stratum, in input order."""
        order = np.argsort(self.stratum, kind="stable")
        return tuple(np.split(order, np.cumsum(self.sizes)[:-1]))


def _check_finite(name, arr):
    if not np.all(np.isfinite(arr)):
        bad = int(np.flatnonzero(~np.isfinite(arr))[0])
        raise NonFiniteOutcome(f"{name} has a non-finite value at row {bad}")


@dataclass(frozen=True, eq=False)
class FinitePopulation(_StrataMixin):
    """Both potential outcomes of every unit, with stratum membership."""

    stratum: np.ndarray
    y1: np.ndarray
    y0: np.ndarray
    labels: tuple

    @classmethod
    def from_arrays(cls, stratum, y1, y0):
        codes, labels = encode_strata(stratum)
        y1 = np.asarray(y1, dtype=float)
        y0 = np.asarray(y0, dtype=float)
        if not (y1.shape == y0.shape == codes.shape):
            raise InputError("stratum, y1 and y0 must have equal length")
        _check_finite("y1", y1)
        _check_finite("y0", y0)
        return cls(_readonly(codes), _readonly(y1), _readonly(y0), labels)

    @property
    def tau(self):
        return float(np.mean(self.y1 - self.y0))

    def observe(self, z):
        """Observed experiment implied by assignment vector ``z``."""
        z = np.asarray(z)
        y = np.where(z == 1, self.y1, self.y0)
        return ObservedExperiment.from_arrays(
            np.asarray(self.labels, dtype=object)[self.stratum], z, y
        )

    def comonotone(self):
        """Same within-stratum marginals, recoupled co-monotonically."""
        y1 = self.y1.copy()
        y0 = self.y0.copy()
        for idx in self.stratum_units:
            y1[idx] = np.sort(self.y1[idx])
            y0[idx] = np.sort(self.y0[idx])
        return FinitePopulation(self.stratum, _readonly(y1), _readonly(y0), self.labels)


@dataclass(frozen=True, eq=False)
class ObservedExperiment(_StrataMixin):
    """Stratum, assignment and observed outcome per unit."""

    stratum: np.ndarray
    z: np.ndarray
    y: np.ndarray
    labels: tuple

    @classmethod
    def from_arrays(cls, stratum, z, y):
        codes, labels = encode_strata(stratum)
        z = np.asarray(z)
        y = np.asarray(y, dtype=float)
        if codes.size == 0:
            raise InputError("no observations")
        if not (z.shape == y.shape == codes.shape):
            raise InputError("stratum, z and y must have equal length")
        if not np.all((z == 0) | (z == 1)):
            bad = int(np.flatnonzero((z != 0) & (z != 1))[0])
            raise InputError(f"treatment indicator must be 0 or 1 (row {bad})")
        _check_finite("y", y)
        obs = cls(_readonly(codes), _readonly(z.astype(np.int8)), _readonly(y), labels)
        obs.design  # validates arm counts
        return obs

    @cached_property
    def design(self):
        n1 = np.bincount(self.stratum, weights=self.z, minlength=self.M).astype(int)
        for m, (nm, k) in enumerate(zip(self.sizes, n1)):
            if k == 0 or k == nm:
                arm = "control" if k == nm else "treated"
                raise EmptyStratumArm(f"stratum {self.labels[m]!r} has no {arm} units")
        return StratifiedDesign(tuple(self.sizes.tolist()), tuple(n1.tolist()))

    @property
    def kind(self):
        return self.design.kind

    @cached_property
    def blocks(self):
        return build_blocks(self.stratum, self.design)

    def arm_values(self, m):
        """``(treated, control)`` outcomes of stratum code ``m``."""
        idx = self.stratum_units[m]
        zi = self.z[idx]
        return self.y[idx][zi == 1], self.y[idx][zi == 0]


def validate_observed(stratum, z, y):
    """Validate raw columns and return the :class:`ObservedExperiment`.

    The derived design (with its :class:`DesignKind`) is ``result.design``.
    """
    return ObservedExperiment.from_arrays(stratum, z, y)


class StratumTruth(NamedTuple):
    n_m: int
    n1: int
    S2_1: float
    S2_0: float
    S2_tau: float
    S_10: float
    S_U: float


class PopulationTruth(NamedTuple):
    tau: float
    sigma2: float
    sigma2_S: float
    sigma2_eq2: float
    strata: tuple


def stratum_truth(y1, y0, n1):
    """Finite-population variances of one stratum (all with ``n_m - 1`` divisors)."""
    nm = y1.size
    if nm < 2:
        raise SingletonStratum("stratum variances need n_m >= 2")
    d1 = y1 - y1.mean()
    d0 = y0 - y0.mean()
    t = y1 - y0
    S_U = nm / (nm - 1) * comonotone_covariance(Ecdf(y1), Ecdf(y0))
    return StratumTruth(
        n_m=nm,
        n1=n1,
        S2_1=float(d1 @ d1 / (nm - 1)),
        S2_0=float(d0 @ d0 / (nm - 1)),
        S2_tau=float(np.sum((t - t.mean()) ** 2) / (nm - 1)),
        S_10=float(d1 @ d0 / (nm - 1)),
        S_U=float(S_U),
    )


def population_truth(pop, design):
    """Exact ATE, the variance of ``sqrt(n) * tau_hat`` and its sharp upper bound.

    ``design`` supplies the treated counts; its stratum sizes must match the
    population's.
    """
    if np.any(pop.sizes < 2):
        raise SingletonStratum("every stratum needs at least two units")
    if tuple(pop.sizes.tolist()) != design.n_units:
        raise InputError("design stratum sizes do not match the population")
    n = pop.n
    sigma2 = sigma2_eq2 = sigma2_S = 0.0
    strata = []
    for m, idx in enumerate(pop.stratum_units):
        st = stratum_truth(pop.y1[idx], pop.y0[idx], design.n_treated[m])
        nm, n1 = st.n_m, st.n1
        n0 = nm - n1
        p = nm / n
        sigma2 += n * p * p * (st.S2_1 / n1 + st.S2_0 / n0 - st.S2_tau / nm)
        sigma2_eq2 += p * (n0 / n1 * st.S2_1 + n1 / n0 * st.S2_0 + 2 * st.S_10)
        sigma2_S += p * (n0 / n1 * st.S2_1 + n1 / n0 * st.S2_0 + 2 * st.S_U)
        strata.append(st)
    assert abs(sigma2 - sigma2_eq2) <= 1e-10 * max(1.0, abs(sigma2)), (
        sigma2,
        sigma2_eq2,
    )
    return PopulationTruth(pop.tau, sigma2, sigma2_S, sigma2_eq2, tuple(strata))
