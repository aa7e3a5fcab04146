"""Monte Carlo coverage studies over fixed finite populations.

A population is generated once from ``population_seed`` and held fixed;
only the treatment assignment is redrawn. Replication ``r`` uses assignment
stream ``r`` and its bootstrap uses a seed derived from ``(seed, r)``, so a
study is reproducible replication by replication.
"""

import itertools
import json
import math
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .bootstrap import (
    bootstrap_paired,
    bootstrap_stratified,
    map_chunks,
    percentile_t_ci,
)
from .estimators import batch_statistics, normal_quantile
from .exceptions import DegenerateBootstrap, InputError
from .experiment import (
    FinitePopulation,
    ObservedExperiment,
    StratifiedDesign,
    build_blocks,
    population_truth,
)
from .randomizer import (
    assignments_from_permutations,
    block_permutations,
    child_seed,
    replicate_uniforms,
)

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

STRATIFIED_KINDS = tuple(f"stratified-case{k}" for k in range(1, 5))
PAIRED_KINDS = ("paired-case1", "paired-case2")
STRATIFIED_METHODS = ("neyman-normal", "sharp-normal", "sharp-boot")
PAIRED_METHODS = ("pair-normal", "pair-boot")
MIN_REPS = 100
REP_CHUNK = 16


@dataclass(frozen=True)
class Distribution:
    """Outcome distribution.

    ``gamma(shape, scale)``, ``normal(mean, sd)``, ``uniform(low, high)`` or
    ``pareto(scale, shape)`` (Pareto type I, support ``[scale, inf)``).
    """

    name: str = "gamma"
    a: float = 1.0
    b: float = 1.0

    _PARAMS = {
        "gamma": ("shape", "scale"),
        "normal": ("mean", "sd"),
        "uniform": ("low", "high"),
        "pareto": ("scale", "shape"),
    }

    def __post_init__(self):
        if self.name not in self._PARAMS:
            raise InputError(f"unknown distribution {self.name!r}")
        if self.name in ("gamma", "pareto") and not (self.a > 0 and self.b > 0):
            raise InputError(f"{self.name} parameters must be positive")
        if self.name == "normal" and not self.b > 0:
            raise InputError("normal sd must be positive")
        if self.name == "uniform" and not self.b > self.a:
            raise InputError("uniform needs low < high")

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        name = d.pop("name")
        keys = cls._PARAMS.get(name)
        if keys is None:
            raise InputError(f"unknown distribution {name!r}")
        try:
            a, b = (float(d.pop(k)) for k in keys)
        except KeyError as exc:
            raise InputError(f"{name} distribution needs parameters {keys}") from exc
        if d:
            raise InputError(f"unexpected {name} parameters: {sorted(d)}")
        return cls(name, a, b)

    def to_dict(self):
        ka, kb = self._PARAMS[self.name]
        return {"name": self.name, ka: self.a, kb: self.b}

    def label(self):
        return f"{self.name}({self.a:g},{self.b:g})"

    def sample(self, rng, size):
        if self.name == "gamma":
            return rng.gamma(self.a, self.b, size)
        if self.name == "normal":
            return self.a + self.b * rng.standard_normal(size)
        u = rng.random(size)
        if self.name == "uniform":
            return self.a + (self.b - self.a) * u
        # inverse CDF on 1 - u in (0, 1]
        return self.a / (1.0 - u) ** (1.0 / self.b)


@dataclass(frozen=True)
class DgpSpec:
    kind: str
    M: int
    n_m: int = 2
    distribution: Distribution = field(default_factory=Distribution)
    propensity: str = "equal"
    population_seed: int = 0
    noise_sd: float = 0.5

    def __post_init__(self):
        if self.kind not in STRATIFIED_KINDS + PAIRED_KINDS:
            raise InputError(f"unknown DGP kind {self.kind!r}")
        if self.propensity not in ("equal", "unequal"):
            raise InputError("propensity must be 'equal' or 'unequal'")
        if self.paired and self.n_m != 2:
            object.__setattr__(self, "n_m", 2)
        if self.M < 1 or self.n_m < 2:
            raise InputError("need M >= 1 and n_m >= 2")

    @property
    def paired(self):
        return self.kind in PAIRED_KINDS

    @property
    def case(self):
        return int(self.kind[-1])

    def design(self):
        if self.paired:
            return StratifiedDesign.uniform(self.M, 2, 1)
        if self.propensity == "equal":
            rho = [0.5] * self.M
        else:
            half = math.ceil(self.M / 2)
            rho = [0.4] * half + [0.6] * (self.M - half)
        n1 = [int(math.floor(r * self.n_m + 0.5)) for r in rho]
        return StratifiedDesign((self.n_m,) * self.M, n1)


def generate_population(spec):
    """Draw the fixed finite population described by ``spec``."""
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(spec.population_seed)))
    n = spec.M * spec.n_m
    stratum = np.repeat(np.arange(spec.M), spec.n_m)
    y1 = spec.distribution.sample(rng, n)
    case = spec.case
    if case == 1:
        y0 = y1.copy()
    elif spec.paired or case in (2, 4):
        y0 = spec.distribution.sample(rng, n)
        if case == 2 and not spec.paired:
            y1 = np.sort(y1.reshape(spec.M, spec.n_m), axis=1).ravel()
            y0 = np.sort(y0.reshape(spec.M, spec.n_m), axis=1).ravel()
    else:
        y0 = y1 + spec.noise_sd * rng.standard_normal(n)
    return FinitePopulation.from_arrays(stratum, y1, y0)


@dataclass(frozen=True)
class MethodSummary:
    """Coverage and mean length over replications.

    ``n_degenerate`` sums dropped bootstrap replicates over all replications;
    ``n_failed`` counts replications whose bootstrap degenerated entirely.
    Failed replications count as non-covering and are left out of the length.
    """

    coverage: float
    mean_length: float
    n_degenerate: int = 0
    n_failed: int = 0


@dataclass(frozen=True)
class SimReport:
    spec: DgpSpec
    tau: float
    sigma2: float
    ratio: float
    methods: dict
    reps: int
    B: int
    alpha: float
    seed: int


def _observed(pop, z):
    return ObservedExperiment(pop.stratum, z, np.where(z == 1, pop.y1, pop.y0), pop.labels)


def _run_study(spec, reps, B, alpha, seed, threads, paired):
    if reps < MIN_REPS:
        raise InputError(f"need at least {MIN_REPS} replications, got {reps}")
    if B and B < 100:
        raise InputError(f"B must be 0 (no bootstrap) or at least 100, got {B}")
    pop = generate_population(spec)
    design = spec.design()
    truth = population_truth(pop, design)
    blocks = build_blocks(pop.stratum, design)
    n, tau = design.n, truth.tau
    root_n = math.sqrt(n)
    z_crit = normal_quantile(1 - alpha / 2)
    assign_seed = child_seed(seed, 0)
    n_draws = sum(design.n_treated)

    def run(start, stop):
        reps_ids = range(start, stop)
        u = replicate_uniforms(assign_seed, reps_ids, n_draws)
        perms = [block_permutations(b, u) for b in blocks]
        stats = batch_statistics(
            blocks, pop.y1, pop.y0, perms, design,
            neyman=not paired, sharp=not paired, paired=paired,
        )
        out = {"tau_hat": stats.tau_hat}
        if paired:
            out["pair-normal"] = stats.paired
        else:
            out["neyman-normal"] = stats.neyman
            out["sharp-normal"] = stats.sharp
        if B:
            lo, hi, deg = [], [], []
            zs = assignments_from_permutations(blocks, perms, n)
            for k, r in enumerate(reps_ids):
                obs = _observed(pop, zs[k])
                bseed = child_seed(seed, 1, r)
                s2 = stats.paired[k] if paired else stats.sharp[k]
                try:
                    if paired:
                        boot = bootstrap_paired(obs, B, alpha, bseed, threads=1)
                    else:
                        boot = bootstrap_stratified(obs, B, alpha, bseed, threads=1)
                except DegenerateBootstrap as exc:
                    lo.append(math.nan)
                    hi.append(math.nan)
                    deg.append(exc.n_degenerate)
                    continue
                ci = percentile_t_ci(stats.tau_hat[k], math.sqrt(s2), n, boot)
                lo.append(ci.lower)
                hi.append(ci.upper)
                deg.append(boot.n_degenerate)
            out["boot"] = (np.array(lo), np.array(hi), np.array(deg))
        return out

    parts = map_chunks(run, reps, threads, chunk_size=REP_CHUNK)
    cat = {k: np.concatenate([p[k] for p in parts]) for k in parts[0] if k != "boot"}
    tau_hat = cat["tau_hat"]
    methods = {}
    for name in (PAIRED_METHODS[:1] if paired else STRATIFIED_METHODS[:2]):
        half = z_crit * np.sqrt(cat[name]) / root_n
        methods[name] = MethodSummary(
            float(np.mean((tau_hat - half <= tau) & (tau <= tau_hat + half))),
            float(np.mean(2 * half)),
        )
    if B:
        lo = np.concatenate([p["boot"][0] for p in parts])
        hi = np.concatenate([p["boot"][1] for p in parts])
        deg = np.concatenate([p["boot"][2] for p in parts])
        name = PAIRED_METHODS[1] if paired else STRATIFIED_METHODS[2]
        failed = np.isnan(lo)
        methods[name] = MethodSummary(
            float(np.mean((lo <= tau) & (tau <= hi))),
            float(np.mean((hi - lo)[~failed])) if not failed.all() else math.nan,
            int(deg.sum()),
            int(failed.sum()),
        )
    if paired:
        ratio = float(np.mean(np.sqrt(cat["pair-normal"] / truth.sigma2)))
    else:
        ratio = float(np.mean(np.sqrt(cat["sharp-normal"] / truth.sigma2)))
    return SimReport(spec, tau, truth.sigma2, ratio, methods, reps, B, alpha, seed)


def run_stratified_study(spec, reps=1000, B=1000, alpha=0.05, seed=0, threads=None):
    """Coverage and mean length of Neyman+Normal, Sharp+Normal and Sharp+Bootstrap.

    Also reports the mean of ``sqrt(sigma2_S_hat / sigma2)`` over replications.
    ``B=0`` skips the bootstrap.
    """
    if spec.paired:
        raise InputError("run_stratified_study needs a stratified DGP")
    return _run_study(spec, reps, B, alpha, seed, threads, paired=False)


def run_paired_study(spec, reps=1000, B=1000, alpha=0.05, seed=0, threads=None):
    """Coverage and mean length of the paired normal and constant-effect bootstrap intervals.

    ``ratio`` is the mean of ``sqrt(sigma2_pair_hat / sigma2)``.
    """
    if not spec.paired:
        raise InputError("run_paired_study needs a paired DGP")
    return _run_study(spec, reps, B, alpha, seed, threads, paired=True)


def run_study(spec, reps=1000, B=1000, alpha=0.05, seed=0, threads=None):
    fn = run_paired_study if spec.paired else run_stratified_study
    return fn(spec, reps, B, alpha, seed, threads)


# ---------------------------------------------------------------------------
# batch configuration files

_SPEC_KEYS = ("kind", "M", "n_m", "propensity", "population_seed", "noise_sd")
_RUN_KEYS = ("reps", "B", "alpha", "seed")


@dataclass(frozen=True)
class Scenario:
    name: str
    spec: DgpSpec
    reps: int
    B: int
    alpha: float
    seed: int


def _as_list(v):
    return v if isinstance(v, list) else [v]


def parse_config(data):
    """Expand a batch config mapping into scenarios.

    Top-level ``reps``, ``B``, ``alpha`` and ``seed`` are defaults. Each entry
    of ``scenario`` may give a list for any of ``kind``, ``M``, ``n_m``,
    ``propensity`` or ``population_seed``; lists expand to their Cartesian
    product in the order written.
    """
    if not isinstance(data, dict):
        raise InputError("config must be a mapping")
    defaults = {"reps": 1000, "B": 1000, "alpha": 0.05, "seed": 0}
    for k in _RUN_KEYS:
        if k in data:
            defaults[k] = data[k]
    entries = data.get("scenario")
    if not entries:
        raise InputError("config has no [[scenario]] entries")
    scenarios = []
    for i, entry in enumerate(entries):
        unknown = set(entry) - set(_SPEC_KEYS) - set(_RUN_KEYS) - {"name", "distribution"}
        if unknown:
            raise InputError(f"scenario {i}: unknown keys {sorted(unknown)}")
        if "kind" not in entry or "M" not in entry:
            raise InputError(f"scenario {i}: 'kind' and 'M' are required")
        dist = Distribution.from_dict(entry.get("distribution", {"name": "gamma", "shape": 1.0, "scale": 1.0}))
        grid_keys = [k for k in entry if k in _SPEC_KEYS]
        for combo in itertools.product(*(_as_list(entry[k]) for k in grid_keys)):
            kw = dict(zip(grid_keys, combo))
            try:
                spec = DgpSpec(distribution=dist, **kw)
            except TypeError as exc:
                raise InputError(f"scenario {i}: {exc}") from exc
            run = {k: entry.get(k, defaults[k]) for k in _RUN_KEYS}
            auto = "{}-M{}-n{}-{}-{}".format(
                spec.kind, spec.M, spec.n_m, spec.propensity, dist.label()
            )
            name = f"{entry['name']}/{auto}" if entry.get("name") else auto
            try:
                sc = Scenario(name, spec, int(run["reps"]), int(run["B"]),
                              float(run["alpha"]), int(run["seed"]))
            except (TypeError, ValueError) as exc:
                raise InputError(f"scenario {i}: {exc}") from exc
            if sc.reps < MIN_REPS:
                raise InputError(f"scenario {name}: reps must be at least {MIN_REPS}")
            if not 0 < sc.alpha < 1:
                raise InputError(f"scenario {name}: alpha must lie in (0, 1)")
            scenarios.append(sc)
    return scenarios


def _bundled_config(name):
    base = resources.files("strata_boot") / "configs"
    for candidate in (name, name + ".toml"):
        ref = base / candidate
        if ref.is_file():
            return ref
    return None


def load_config_data(path):
    """Parse a TOML or JSON config file; bare names also resolve to bundled configs."""
    p = Path(path)
    if p.is_file():
        raw = p.read_bytes()
    else:
        ref = _bundled_config(p.name) if p.parent == Path(".") else None
        if ref is None:
            raise InputError(f"config {path} not found")
        raw = ref.read_bytes()
    try:
        if p.suffix == ".json":
            return json.loads(raw)
        return tomllib.loads(raw.decode())
    except (ValueError, UnicodeDecodeError) as exc:
        raise InputError(f"cannot parse config {path}: {exc}") from exc


def load_config(path):
    return parse_config(load_config_data(path))


CSV_COLUMNS = (
    "scenario", "kind", "distribution", "M", "n_m", "propensity", "method",
    "coverage", "mean_length", "ratio", "n_degenerate", "n_failed", "tau", "sigma2",
    "reps", "B", "alpha", "seed", "population_seed",
)


def report_rows(name, report):
    spec = report.spec
    for method, summary in report.methods.items():
        yield {
            "scenario": name,
            "kind": spec.kind,
            "distribution": spec.distribution.label(),
            "M": spec.M,
            "n_m": spec.n_m,
            "propensity": spec.propensity,
            "method": method,
            "coverage": summary.coverage,
            "mean_length": summary.mean_length,
            "ratio": report.ratio,
            "n_degenerate": summary.n_degenerate,
            "n_failed": summary.n_failed,
            "tau": report.tau,
            "sigma2": report.sigma2,
            "reps": report.reps,
            "B": report.B,
            "alpha": report.alpha,
            "seed": report.seed,
            "population_seed": spec.population_seed,
        }


def spec_to_dict(spec):
    d = asdict(spec)
    d["distribution"] = spec.distribution.to_dict()
    return d
