from collections import Counter
from math import comb

import numpy as np
import pytest
from scipy.stats import chisquare

from strata_boot.exceptions import TooLargeToEnumerate
from strata_boot.experiment import StratifiedDesign, build_blocks
from strata_boot.randomizer import (
    RngState,
    child_seed,
    draw_assignment,
    draw_assignments,
    enumerate_assignments,
)


def pattern_counts(design, stratum, draws, seed):
    blocks = build_blocks(stratum, design)
    z = draw_assignments(design, blocks, seed, range(draws))
    return z, Counter(map(bytes, z))


def test_counts_are_exact():
    design = StratifiedDesign((5, 2, 7, 2, 9), (2, 1, 3, 1, 4))
    stratum = np.repeat(np.arange(5), design.n_units)
    z, _ = pattern_counts(design, stratum, 500, 1)
    for m in range(5):
        assert np.all(z[:, stratum == m].sum(axis=1) == design.n_treated[m])


def test_pairs_are_fair():
    design = StratifiedDesign.uniform(3, 2, 1)
    stratum = np.repeat(np.arange(3), 2)
    z, _ = pattern_counts(design, stratum, 20000, 5)
    freq = z[:, ::2].mean(axis=0)
    assert np.all(np.abs(freq - 0.5) < 5 * np.sqrt(0.25 / 20000))


def test_four_choose_two_chi_square():
    design = StratifiedDesign((4,), (2,))
    _, counts = pattern_counts(design, np.zeros(4, int), 60000, 11)
    assert len(counts) == 6
    assert chisquare(list(counts.values())).pvalue > 0.001


@pytest.mark.parametrize(
    "sizes,treated",
    [((4,), (2,)), ((2, 2), (1, 1)), ((3, 4), (1, 2)), ((6,), (3,)), ((2, 3, 3), (1, 1, 2))],
)
def test_uniform_within_five_sigma(sizes, treated):
    design = StratifiedDesign(sizes, treated)
    K = design.n_assignments
    assert K <= 36
    draws = 10**5
    stratum = np.repeat(np.arange(design.M), sizes)
    _, counts = pattern_counts(design, stratum, draws, 2024)
    assert len(counts) == K
    p = 1 / K
    sd = np.sqrt(draws * p * (1 - p))
    assert all(abs(c - draws * p) <= 5 * sd for c in counts.values())


def test_draw_assignment_deterministic():
    design = StratifiedDesign((6, 4), (3, 2))
    a = draw_assignment(design, RngState(42, 3))
    b = draw_assignment(design, RngState(42, 3))
    c = draw_assignment(design, RngState(42, 4))
    assert a.tolist() == b.tolist()
    assert a.sum() == 5 and c.sum() == 5


def test_replicate_reproducible_alone():
    design = StratifiedDesign((6, 4, 6), (3, 1, 2))
    stratum = np.array([0, 1, 2, 0, 1, 2, 0, 1, 2, 0, 1, 2, 0, 2, 0, 2])
    blocks = build_blocks(stratum, design)
    batch = draw_assignments(design, blocks, 99, range(50))
    for b in (0, 17, 49):
        alone = draw_assignments(design, blocks, 99, [b])[0]
        assert alone.tolist() == batch[b].tolist()
        assert draw_assignment(design, RngState(99, b), stratum).tolist() == batch[b].tolist()


def test_interleaved_strata_respected():
    design = StratifiedDesign((3, 3), (1, 2))
    stratum = np.array([1, 0, 1, 0, 1, 0])
    for b in range(20):
        z = draw_assignment(design, RngState(1, b), stratum)
        assert z[stratum == 0].sum() == 1 and z[stratum == 1].sum() == 2


def test_child_seed_distinct():
    seeds = {child_seed(1, 0), child_seed(1, 1), child_seed(2, 0), child_seed(1, 1, 0)}
    assert len(seeds) == 4
    assert child_seed(1, 1) == child_seed(1, 1)
    assert 0 <= child_seed(7) < 2**63


def test_enumerate_examples():
    assert len(list(enumerate_assignments(StratifiedDesign.uniform(2, 2, 1)))) == 4
    vecs = list(enumerate_assignments(StratifiedDesign((4,), (2,))))
    assert len(vecs) == 6 and len({v.tobytes() for v in vecs}) == 6
    with pytest.raises(TooLargeToEnumerate) as info:
        list(enumerate_assignments(StratifiedDesign((30,), (15,))))
    assert info.value.count == comb(30, 15)


def test_enumerate_covers_every_vector_once():
    design = StratifiedDesign((4, 3, 2), (2, 1, 1))
    stratum = np.array([0, 1, 2, 0, 1, 2, 0, 1, 0])
    vecs = [v.tobytes() for v in enumerate_assignments(design, stratum)]
    assert len(vecs) == len(set(vecs)) == 6 * 3 * 2
    for v in enumerate_assignments(design, stratum):
        assert [v[stratum == m].sum() for m in range(3)] == [2, 1, 1]
