"""End-to-end acceptance checks, one test per criterion.

Each test records its measured quantities with ``record_property``; the
terminal summary prints one PASS/FAIL line per criterion.
"""

import json
import os
import subprocess
import sys
import time
from fractions import Fraction

import numpy as np
from scipy.stats import kstest

from strata_boot.bootstrap import bootstrap_paired, bootstrap_stratified
from strata_boot.cli import main
from strata_boot.ecdf import Ecdf, quantile_product_integral
from strata_boot.experiment import FinitePopulation, StratifiedDesign, validate_observed
from strata_boot.imputation import copy_counts, rank_preserving_impute
from strata_boot.oracle import (
    check_concentration,
    concentration_bound,
    riemann_integral_oracle,
    verify_variance_identities,
)
from strata_boot.randomizer import RngState, draw_assignment
from strata_boot.simulation import DgpSpec, Distribution, generate_population, run_study

TABLE1_CSV = "stratum,z,y\n1,1,8\n1,0,4\n2,1,6\n2,0,2\n"


def fmt(x):
    return f"{x:.4g}"


def random_design(rng, max_n=12):
    """1 to 3 strata of at least 2 units each, at most ``max_n`` units in total."""
    M = int(rng.integers(1, 4))
    sizes = [2] * M
    for _ in range(int(rng.integers(0, max_n - 2 * M + 1))):
        sizes[int(rng.integers(M))] += 1
    treated = [int(rng.integers(1, s)) for s in sizes]
    return StratifiedDesign(tuple(sizes), tuple(treated))


def test_criterion_01_oracle_identities(record_property):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    failures, worst = 0, 0.0
    for _ in range(200):
        design = random_design(rng)
        s = np.repeat(np.arange(design.M), design.n_units)
        pop = FinitePopulation.from_arrays(s, rng.normal(size=design.n) * 2, rng.gamma(1.0, 1.0, design.n))
        rep = verify_variance_identities(pop, design, raise_on_failure=False)
        failures += not rep.passed
        worst = max(worst, abs(rep.variance_exact - rep.sigma2_eq1) / max(1.0, rep.variance_exact))
    elapsed = time.perf_counter() - t0
    record_property("populations", 200)
    record_property("failures", failures)
    record_property("worst_rel_gap", f"{worst:.2e}")
    record_property("seconds", fmt(elapsed))
    assert failures == 0
    assert worst <= 1e-12
    assert elapsed < 30


def test_criterion_02_sharp_integral_oracle(record_property):
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(100):
        g = Ecdf(rng.normal(size=int(rng.integers(1, 16))))
        f = Ecdf(rng.normal(size=int(rng.integers(1, 16))))
        worst = max(worst, abs(riemann_integral_oracle(g, f, 10**5) - quantile_product_integral(g, f)))
    worked = quantile_product_integral(Ecdf([2, 4]), Ecdf([1, 3, 5]))
    elapsed = time.perf_counter() - t0
    record_property("max_abs_gap", f"{worst:.2e}")
    record_property("worked_value", repr(worked))
    record_property("seconds", fmt(elapsed))
    assert worst <= 1e-4
    # 31/3 rounded once to the nearest double
    assert worked == 31 / 3 and Fraction(worked).limit_denominator(100) == Fraction(31, 3)
    assert elapsed < 10


def test_criterion_03_copy_count_equivalence(record_property):
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    grid = np.arange(1, 41) / 8
    mismatches = 0
    for _ in range(100):
        n_m = int(rng.integers(4, 21))
        n1 = int(rng.integers(2, n_m - 1))
        z = rng.permutation(np.r_[np.ones(n1, int), np.zeros(n_m - n1, int)])
        y = np.empty(n_m)
        # distinct within each arm; values may coincide across arms
        y[z == 1] = rng.choice(grid, n1, replace=False)
        y[z == 0] = rng.choice(grid, n_m - n1, replace=False)
        obs = validate_observed(np.zeros(n_m, int), z, y)
        imp = rank_preserving_impute(obs)
        for arm, col in ((1, imp.y1), (0, imp.y0)):
            largest_first = np.sort(obs.y[obs.z == arm])[::-1]
            expanded = np.repeat(largest_first, copy_counts(n_m, largest_first.size))
            mismatches += not np.array_equal(np.sort(col), np.sort(expanded))
    elapsed = time.perf_counter() - t0
    record_property("strata", 100)
    record_property("mismatches", mismatches)
    record_property("seconds", fmt(elapsed))
    assert mismatches == 0
    assert elapsed < 5


def test_criterion_04_sharp_ratio_pattern(record_property):
    t0 = time.perf_counter()
    means = {}
    for case in (1, 4):
        ratios = [
            run_study(DgpSpec(f"stratified-case{case}", M=10, n_m=10, population_seed=s),
                      reps=1000, B=0, seed=0).ratio
            for s in range(5)
        ]
        means[case] = float(np.mean(ratios))
        record_property(f"case{case}_ratios", [round(r, 4) for r in ratios])
    elapsed = time.perf_counter() - t0
    record_property("case1_mean", fmt(means[1]))
    record_property("case4_mean", fmt(means[4]))
    record_property("seconds", fmt(elapsed))
    assert 0.84 <= means[1] <= 0.94
    assert means[4] >= 1.10
    assert elapsed < 120


def test_criterion_05_stratified_coverage_and_length(record_property):
    t0 = time.perf_counter()
    seeds = (0, 1, 2)
    summary = {}
    for case in (1, 2, 3):
        per = {"neyman-normal": [], "sharp-normal": [], "sharp-boot": []}
        lengths = {"neyman-normal": [], "sharp-boot": []}
        for s in seeds:
            rep = run_study(DgpSpec(f"stratified-case{case}", M=20, n_m=10, population_seed=s),
                            reps=500, B=500, seed=11)
            for m in per:
                per[m].append(rep.methods[m].coverage)
            for m in lengths:
                lengths[m].append(rep.methods[m].mean_length)
        cov = {m: float(np.mean(v)) for m, v in per.items()}
        ln = {m: float(np.mean(v)) for m, v in lengths.items()}
        summary[case] = (cov, ln)
        record_property(f"case{case}_coverage", {m: [round(c, 3) for c in v] for m, v in per.items()})
        record_property(f"case{case}_length_NN_SB", (round(ln["neyman-normal"], 4), round(ln["sharp-boot"], 4)))
    elapsed = time.perf_counter() - t0
    record_property("seconds", fmt(elapsed))
    for case, (cov, ln) in summary.items():
        assert cov["neyman-normal"] >= 0.93, case
        assert cov["sharp-boot"] >= 0.93, case
        assert cov["sharp-normal"] <= cov["sharp-boot"], case
        assert ln["sharp-boot"] <= ln["neyman-normal"], case
    cov2, ln2 = summary[2]
    reduction = 1 - ln2["sharp-boot"] / ln2["neyman-normal"]
    record_property("case2_length_reduction", fmt(reduction))
    assert reduction >= 0.01
    assert elapsed < 600


def test_criterion_06_paired_gamma(record_property):
    t0 = time.perf_counter()
    dist = Distribution("gamma", 0.1, 10.0)
    ok = True
    for M in (30, 60):
        cov = {"pair-normal": [], "pair-boot": []}
        ln = {"pair-normal": [], "pair-boot": []}
        for s in range(5):
            rep = run_study(DgpSpec("paired-case2", M=M, distribution=dist, population_seed=s),
                            reps=500, B=500, seed=11)
            for m in cov:
                cov[m].append(rep.methods[m].coverage)
                ln[m].append(rep.methods[m].mean_length)
        c = {m: float(np.mean(v)) for m, v in cov.items()}
        L = {m: float(np.mean(v)) for m, v in ln.items()}
        record_property(f"M{M}_coverage", {m: [round(x, 3) for x in v] for m, v in cov.items()})
        record_property(f"M{M}_mean_coverage", {m: round(v, 4) for m, v in c.items()})
        record_property(f"M{M}_mean_length", {m: round(v, 4) for m, v in L.items()})
        ok &= c["pair-normal"] >= 0.95 and c["pair-boot"] >= 0.95
        ok &= L["pair-boot"] <= L["pair-normal"]
    elapsed = time.perf_counter() - t0
    record_property("seconds", fmt(elapsed))
    assert ok
    assert elapsed < 300


def t_summary(t):
    return float(np.mean(t)), float(np.var(t)), float(kstest(t, "norm").statistic)


def test_criterion_07_bootstrap_clt(record_property):
    t0 = time.perf_counter()
    spec = DgpSpec("stratified-case2", M=20, n_m=20, population_seed=1)
    pop = generate_population(spec)
    z = draw_assignment(spec.design(), RngState(7, 0), pop.stratum)
    boot = bootstrap_stratified(pop.observe(z), B=5000, seed=3)
    strat = t_summary(boot.t_stats)

    spec = DgpSpec("paired-case1", M=200, population_seed=1)
    pop = generate_population(spec)
    z = draw_assignment(spec.design(), RngState(7, 0), pop.stratum)
    pboot = bootstrap_paired(pop.observe(z), B=5000, seed=3)
    paired = t_summary(pboot.t_stats)
    elapsed = time.perf_counter() - t0
    for name, (mean, var, ks) in (("stratified", strat), ("paired", paired)):
        record_property(name, f"mean={mean:.4f} var={var:.4f} ks={ks:.4f}")
    record_property("seconds", fmt(elapsed))
    for mean, var, ks in (strat, paired):
        assert abs(mean) <= 0.05
        assert abs(var - 1) <= 0.1
        assert ks <= 0.03
    assert elapsed < 120


def test_criterion_08_concentration_bound(record_property):
    t0 = time.perf_counter()
    hand = concentration_bound(StratifiedDesign((10,), (5,)), 0.5)
    record_property("hand_value", fmt(hand))
    assert abs(hand - 4.7237) <= 1e-3
    rng = np.random.default_rng(8)
    designs = {20: StratifiedDesign((10, 10), (5, 5)), 50: StratifiedDesign((20, 30), (10, 12))}
    eps = (0.2, 0.3, 0.5, 0.6, 0.8, 1.0)
    informative, conclusive, violations = 0, 0, 0
    for n, design in designs.items():
        s = np.repeat(np.arange(design.M), design.n_units)
        pop = FinitePopulation.from_arrays(s, rng.normal(size=n), rng.gamma(2.0, 1.0, n))
        for arm in ("treated", "control"):
            for two_sided in (False, True):
                for c in check_concentration(pop, design, eps, draws=10**4, seed=n,
                                             arm=arm, two_sided=two_sided):
                    informative += c.informative
                    conclusive += c.conclusive
                    violations += not c.passed
    elapsed = time.perf_counter() - t0
    record_property("informative_checks", informative)
    record_property("wilson_confirmed", conclusive)
    record_property("violations", violations)
    record_property("seconds", fmt(elapsed))
    assert informative > 0 and violations == 0
    assert elapsed < 60


def test_criterion_09_degeneracy_guard(tmp_path, capsys, record_property):
    path = tmp_path / "table1.csv"
    path.write_text(TABLE1_CSV)
    t0 = time.perf_counter()
    sharp = main(["analyze", str(path), "--method", "sharp-boot", "--seed", "0"])
    capsys.readouterr()
    pair = main(["analyze", str(path), "--method", "pair-boot", "--seed", "0"])
    doc = json.loads(capsys.readouterr().out)
    elapsed = time.perf_counter() - t0
    record_property("sharp_boot_exit", sharp)
    record_property("pair_boot_exit", pair)
    record_property("tau_hat", doc["tau_hat"])
    record_property("pair_boot_status", doc["diagnostics"]["status"])
    record_property("seconds", fmt(elapsed))
    assert sharp == 3
    assert pair == 0 and doc["tau_hat"] == 4
    assert elapsed < 1


def cli(args, threads):
    env = dict(os.environ, STRATA_BOOT_THREADS=str(threads))
    proc = subprocess.run([sys.executable, "-m", "strata_boot.cli", *args],
                          capture_output=True, env=env)
    return proc.returncode, proc.stdout


def test_criterion_10_determinism(tmp_path, record_property):
    rng = np.random.default_rng(10)
    strat = ["stratum,z,y"]
    for m in range(6):
        for zi in rng.permutation([1] * 5 + [0] * 5):
            strat.append(f"s{m},{zi},{float(rng.gamma(1.0, 2.0) + zi)!r}")
    (tmp_path / "strat.csv").write_text("\n".join(strat) + "\n")
    pairs = ["pair,z,y"] + [f"{m},{z},{float(rng.gamma(2.0))!r}" for m in range(40) for z in (1, 0)]
    (tmp_path / "pairs.csv").write_text("\n".join(pairs) + "\n")
    pop = ["stratum,y1,y0"] + [f"{i % 2},{float(rng.normal())!r},{float(rng.normal())!r}" for i in range(10)]
    (tmp_path / "pop.csv").write_text("\n".join(pop) + "\n")
    (tmp_path / "sim.toml").write_text(
        'reps = 200\nB = 200\n[[scenario]]\nkind = ["stratified-case2", "stratified-case4"]\n'
        'M = 4\nn_m = 6\n[[scenario]]\nkind = "paired-case2"\nM = 15\n'
    )
    d = str(tmp_path)
    commands = {
        "analyze sharp-boot": ["analyze", f"{d}/strat.csv", "--method", "sharp-boot", "--B", "1000", "--seed", "5"],
        "analyze neyman-normal": ["analyze", f"{d}/strat.csv", "--method", "neyman-normal", "--seed", "5"],
        "analyze pair-boot": ["analyze", f"{d}/pairs.csv", "--method", "pair-boot", "--B", "1000", "--seed", "5"],
        "simulate": ["simulate", f"{d}/sim.toml", "--seed", "5", "-q"],
        "enumerate distribution": ["enumerate", f"{d}/pop.csv", "--seed", "5"],
        "enumerate identities": ["enumerate", f"{d}/pop.csv", "--mode", "identities", "--seed", "5"],
    }
    threads = max(4, os.cpu_count() or 1)
    differing = []
    for name, args in commands.items():
        one = cli(args, 1)
        many = cli(args, threads)
        assert one[0] == 0, (name, one)
        if one != many:
            differing.append(name)
    record_property("commands", len(commands))
    record_property("threads_compared", f"1 vs {threads}")
    record_property("differing", differing or "none")
    assert not differing
