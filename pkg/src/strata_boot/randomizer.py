"""Seeded stratified and paired randomization.

Each replicate ``b`` draws from its own counter-based stream (Philox keyed by
``SeedSequence(seed, spawn_key=(b,))``), so a replicate's assignment depends
only on ``(seed, b)`` and never on batch size, order or thread count.

Within a stratum the treated set is chosen by a partial Fisher-Yates shuffle
of the stratum's positions driven by ``n_m1`` uniforms; strata consume their
uniforms in stratum order.
"""

import itertools
from dataclasses import dataclass

import numpy as np

from .exceptions import TooLargeToEnumerate
from .experiment import build_blocks

ENUMERATION_LIMIT = 10**7


@dataclass(frozen=True)
class RngState:
    seed: int
    stream_id: int = 0

    def generator(self):
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,))
        return np.random.Generator(np.random.Philox(ss))


def child_seed(seed, *keys):
    """Deterministic 63-bit seed for a nested stream family (e.g. one simulation replication)."""
    ss = np.random.SeedSequence(seed, spawn_key=tuple(keys))
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))


def fresh_seed():
    return int(np.random.SeedSequence().generate_state(1, np.uint64)[0] >> np.uint64(1))


def replicate_uniforms(seed, streams, size):
    """Matrix of uniforms, row ``r`` drawn from stream ``streams[r]``."""
    out = np.empty((len(streams), size))
    for r, b in enumerate(streams):
        out[r] = RngState(seed, int(b)).generator().random(size)
    return out


def block_permutations(block, uniforms):
    """Partial Fisher-Yates over every stratum of a block, for every replicate.

    Parameters
    ----------
    block : Block
    uniforms : ndarray, shape (R, n_draws)
        One row of uniforms per replicate.

    Returns
    -------
    perm : ndarray, shape (R, M_g, n_m)
        Within-stratum positions; the first ``n1`` entries are the treated.
    """
    R = uniforms.shape[0]
    n_m, n1 = block.n_m, block.n1
    u = uniforms[:, block.draw_offsets[:, None] + np.arange(n1)]
    perm = np.broadcast_to(np.arange(n_m), (R, block.strata.size, n_m)).copy()
    for j in range(n1):
        k = j + np.minimum((u[..., j] * (n_m - j)).astype(np.intp), n_m - j - 1)
        k = k[..., None]
        at_j = perm[..., j].copy()
        perm[..., j] = np.take_along_axis(perm, k, axis=-1)[..., 0]
        np.put_along_axis(perm, k, at_j[..., None], axis=-1)
    return perm


def assignments_from_permutations(blocks, perms, n):
    """Turn per-block permutations into 0/1 assignment rows of length ``n``."""
    R = perms[0].shape[0]
    z = np.zeros((R, n), dtype=np.int8)
    rows = np.arange(R)[:, None]
    for block, perm in zip(blocks, perms):
        treated_pos = perm[..., : block.n1]
        units = np.take_along_axis(
            np.broadcast_to(block.units, perm.shape), treated_pos, axis=-1
        )
        z[rows, units.reshape(R, -1)] = 1
    return z


def draw_assignments(design, blocks, seed, streams):
    """Assignment matrix, one row per stream id."""
    u = replicate_uniforms(seed, streams, sum(design.n_treated))
    perms = [block_permutations(b, u) for b in blocks]
    return assignments_from_permutations(blocks, perms, design.n)


def draw_assignment(design, rng, stratum=None):
    """Draw one assignment vector.

    Parameters
    ----------
    design : StratifiedDesign
    rng : RngState
    stratum : array_like of int, optional
        Stratum code of each unit. Defaults to contiguous strata in design order.
    """
    if stratum is None:
        stratum = np.repeat(np.arange(design.M), design.n_units)
    blocks = build_blocks(stratum, design)
    return draw_assignments(design, blocks, rng.seed, [rng.stream_id])[0]


def enumerate_assignments(design, stratum=None, limit=ENUMERATION_LIMIT):
    """Yield every admissible assignment vector exactly once.

    Streams the Cartesian product of per-stratum combinations; nothing is
    materialized beyond the per-stratum combination lists.
    """
    total = design.n_assignments
    if total > limit:
        raise TooLargeToEnumerate(total, limit)
    if stratum is None:
        stratum = np.repeat(np.arange(design.M), design.n_units)
    stratum = np.asarray(stratum)
    members = [np.flatnonzero(stratum == m) for m in range(design.M)]
    per_stratum = [
        list(itertools.combinations(idx.tolist(), n1))
        for idx, n1 in zip(members, design.n_treated)
    ]
    for choice in itertools.product(*per_stratum):
        z = np.zeros(design.n, dtype=np.int8)
        for treated in choice:
            z[list(treated)] = 1
        yield z
