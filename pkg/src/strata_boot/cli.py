"""``strata-boot`` command line interface.

Exit codes: 0 success, 1 identity check failed, 2 input error,
3 method/design mismatch, 4 enumeration too large.
"""

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from .bootstrap import DEFAULT_B, METHODS, analyze
from .ecdf import Ecdf, merged_breakpoints
from .exceptions import (
    DesignError,
    DomainError,
    InputError,
    StrataBootError,
    TooLargeToEnumerate,
)
from .experiment import FinitePopulation, StratifiedDesign, validate_observed
from .oracle import exact_distribution, verify_variance_identities
from .randomizer import fresh_seed
from .simulation import (
    CSV_COLUMNS,
    load_config_data,
    parse_config,
    report_rows,
    run_study,
)

SCHEMA_VERSION = 1
EXIT_OK, EXIT_IDENTITY, EXIT_INPUT, EXIT_DESIGN, EXIT_ENUM = 0, 1, 2, 3, 4


def _exit_code(exc):
    # EmptyStratumArm is both an input and a design error; treat it as input.
    if isinstance(exc, (InputError, DomainError)):
        return EXIT_INPUT
    if isinstance(exc, DesignError):
        return EXIT_DESIGN
    if isinstance(exc, TooLargeToEnumerate):
        return EXIT_ENUM
    return EXIT_INPUT


# ---------------------------------------------------------------------------
# CSV input


def _open_text(path):
    try:
        return open(path, newline="")
    except OSError as exc:
        raise InputError(f"cannot open {path}: {exc}") from exc


def _read_table(path, required, aliases=None, optional=()):
    """Read a headed CSV into column lists; ``line`` numbers count the header as line 1."""
    aliases = aliases or {}
    with _open_text(path) as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InputError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        cols = {}
        for j, h in enumerate(header):
            name = aliases.get(h, h)
            if name in cols:
                raise InputError(f"{path}: duplicate column {name!r}")
            cols[name] = j
        missing = [c for c in required if c not in cols]
        if missing:
            raise InputError(
                f"{path}: header must contain {', '.join(required)}; missing {', '.join(missing)}"
            )
        wanted = list(required) + [c for c in optional if c in cols]
        out = {c: [] for c in wanted}
        lines = []
        for row in reader:
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise InputError(
                    f"{path}: line {reader.line_num}: expected {len(header)} fields, got {len(row)}"
                )
            for c in wanted:
                out[c].append(row[cols[c]].strip())
            lines.append(reader.line_num)
    if not lines:
        raise InputError(f"{path}: no data rows")
    return out, lines


def _parse_real(values, lines, name, path):
    out = np.empty(len(values))
    for k, (v, line) in enumerate(zip(values, lines)):
        try:
            x = float(v)
        except ValueError:
            raise InputError(f"{path}: line {line}: {name}={v!r} is not a number") from None
        if not math.isfinite(x):
            raise InputError(f"{path}: line {line}: {name}={v!r} is not finite")
        out[k] = x
    return out


def _parse_binary(values, lines, path):
    out = np.empty(len(values), dtype=np.int8)
    for k, (v, line) in enumerate(zip(values, lines)):
        try:
            x = float(v)
        except ValueError:
            x = None
        if x not in (0.0, 1.0):
            raise InputError(f"{path}: line {line}: z={v!r} must be 0 or 1")
        out[k] = int(x)
    return out


def read_observed(path):
    cols, lines = _read_table(path, ("stratum", "z", "y"), aliases={"pair": "stratum"})
    z = _parse_binary(cols["z"], lines, path)
    y = _parse_real(cols["y"], lines, "y", path)
    return validate_observed(np.asarray(cols["stratum"], dtype=object), z, y)


def read_population(path, n1=None):
    """Population CSV ``stratum,y1,y0`` plus an optional ``z`` column fixing the treated counts."""
    cols, lines = _read_table(path, ("stratum", "y1", "y0"), optional=("z",))
    y1 = _parse_real(cols["y1"], lines, "y1", path)
    y0 = _parse_real(cols["y0"], lines, "y0", path)
    pop = FinitePopulation.from_arrays(np.asarray(cols["stratum"], dtype=object), y1, y0)
    sizes = pop.sizes.tolist()
    if "z" in cols:
        if n1 is not None:
            raise InputError("give either a z column or --n1, not both")
        z = _parse_binary(cols["z"], lines, path)
        treated = np.bincount(pop.stratum, weights=z, minlength=pop.M).astype(int).tolist()
    elif n1 is not None:
        treated = [n1] * pop.M
    else:
        treated = [s // 2 for s in sizes]
    return pop, StratifiedDesign(tuple(sizes), tuple(treated))


# ---------------------------------------------------------------------------
# output helpers


def _write_text(text, output):
    if output in (None, "-"):
        sys.stdout.write(text)
    else:
        try:
            Path(output).write_text(text)
        except OSError as exc:
            raise InputError(f"cannot write {output}: {exc}") from exc


def _csv_text(rows, columns):
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    return buf.getvalue()


def result_to_dict(res, B=None):
    """JSON-ready view of an :class:`AnalysisResult`; floats keep full precision."""
    boot = res.bootstrap
    doc = {
        "schema": SCHEMA_VERSION,
        "method": res.method,
        "alpha": res.alpha,
        "seed": res.seed,
        "n": res.n,
        "M": res.M,
        "design_kind": res.design_kind,
        "strata": [str(s) for s in res.strata],
        "tau_hat": res.tau_hat,
        "tau_hat_per_stratum": list(res.tau_hat_per_stratum),
        "weights": list(res.weights),
        "variances": dict(res.variances),
        "ci": None if res.ci is None else {
            "lower": res.ci.lower,
            "upper": res.ci.upper,
            "alpha": res.ci.alpha,
            "method": res.ci.method_tag,
        },
        "bootstrap": None,
        "diagnostics": dict(res.diagnostics),
    }
    if res.method.endswith("-boot"):
        doc["bootstrap"] = {"B": B}
        if boot is not None:
            doc["bootstrap"].update(
                seed=boot.seed,
                kind=boot.kind,
                tau_star=boot.tau_star,
                n_degenerate=boot.n_degenerate,
                q_lo=boot.q_lo,
                q_hi=boot.q_hi,
            )
    return doc


def plot_rows(obs):
    """ECDF steps per stratum and arm, plus the co-monotone QQ coupling of the arms."""
    for m in range(obs.M):
        label = str(obs.labels[m])
        t, c = obs.arm_values(m)
        for arm, vals in (("treated", t), ("control", c)):
            e = Ecdf(vals)
            ys = np.unique(e.sorted_values)
            for y, F in zip(ys.tolist(), e(ys).tolist()):
                yield {"series": f"ecdf_{arm}", "stratum": label, "x": y, "y": F}
        g, f = Ecdf(t), Ecdf(c)
        _, gi, fi, lcm = merged_breakpoints(g.n, f.n)
        for a, b in zip(f.sorted_values[fi].tolist(), g.sorted_values[gi].tolist()):
            yield {"series": "qq", "stratum": label, "x": a, "y": b}


# ---------------------------------------------------------------------------
# commands


def cmd_analyze(args):
    obs = read_observed(args.data)
    if args.delta is not None and args.method != "pair-boot":
        raise InputError("--delta applies only to --method pair-boot")
    seed = args.seed
    if args.method.endswith("-boot") and seed is None:
        seed = fresh_seed()
        print(f"strata-boot: using seed {seed}", file=sys.stderr)
    res = analyze(obs, args.method, alpha=args.alpha, B=args.B, seed=seed,
                  delta=args.delta, strict=False)
    if res.diagnostics.get("status") == "degenerate":
        print(f"strata-boot: warning: {res.diagnostics['message']}", file=sys.stderr)
    doc = result_to_dict(res, B=args.B)
    _write_text(json.dumps(doc, indent=2) + "\n", args.output)
    if args.emit_plot_data:
        _write_text(_csv_text(plot_rows(obs), ("series", "stratum", "x", "y")),
                    args.emit_plot_data)
    return EXIT_OK


def cmd_simulate(args):
    data = load_config_data(args.config)
    if not isinstance(data, dict):
        raise InputError("config must be a mapping")
    if args.seed is not None:
        data = dict(data, seed=args.seed)
        data["scenario"] = [
            {k: v for k, v in sc.items() if k != "seed"} for sc in data.get("scenario", [])
        ]
    elif "seed" not in data and any("seed" not in sc for sc in data.get("scenario", [])):
        data = dict(data, seed=fresh_seed())
        print(f"strata-boot: using seed {data['seed']}", file=sys.stderr)
    scenarios = parse_config(data)
    rows = []
    for sc in scenarios:
        rep = run_study(sc.spec, sc.reps, sc.B, sc.alpha, sc.seed)
        rows.extend(report_rows(sc.name, rep))
        if not args.quiet:
            print(f"strata-boot: done {sc.name}", file=sys.stderr)
    _write_text(_csv_text(rows, CSV_COLUMNS), args.output)
    return EXIT_OK


def cmd_enumerate(args):
    pop, design = read_population(args.data, args.n1)
    if args.mode == "distribution":
        dist = exact_distribution(pop, design)
        rows = ({"tau_hat": v, "prob": p} for v, p in dist.rows())
        _write_text(_csv_text(rows, ("tau_hat", "prob")), args.output)
        return EXIT_OK
    rep = verify_variance_identities(pop, design, raise_on_failure=False)
    doc = {
        "schema": SCHEMA_VERSION,
        "status": "PASS" if rep.passed else "FAIL",
        "n_assignments": rep.n_assignments,
        "tau": rep.tau,
        "mean_tau_hat": rep.mean_tau_hat,
        "variance_exact": rep.variance_exact,
        "sigma2_eq1": rep.sigma2_eq1,
        "sigma2_eq2": rep.sigma2_eq2,
        "sigma2_S": rep.sigma2_S,
        "sigma2_comonotone": rep.sigma2_comonotone,
        "sigma2_S_comonotone": rep.sigma2_S_comonotone,
        "checks": [{"name": n, "passed": ok, "detail": d} for n, ok, d in rep.checks],
    }
    _write_text(json.dumps(doc, indent=2) + "\n", args.output)
    return EXIT_OK if rep.passed else EXIT_IDENTITY


def _alpha(text):
    try:
        a = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid alpha {text!r}") from None
    if not 0 < a < 1:
        raise argparse.ArgumentTypeError("alpha must lie in (0, 1)")
    return a


def _finite(text):
    try:
        x = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid number {text!r}") from None
    if not math.isfinite(x):
        raise argparse.ArgumentTypeError("value must be finite")
    return x


def build_parser():
    parser = argparse.ArgumentParser(
        prog="strata-boot",
        description="Design-based inference for stratified and paired experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="estimate the ATE from a stratum,z,y CSV")
    p.add_argument("data", help="CSV with columns stratum (or pair), z, y")
    p.add_argument("--method", required=True, choices=METHODS)
    p.add_argument("--alpha", type=_alpha, default=0.05)
    p.add_argument("--B", type=int, default=DEFAULT_B, help="bootstrap replicates")
    p.add_argument("--delta", type=_finite, default=None,
                   help="imputed constant effect for pair-boot (default: tau_hat)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--output", "-o", default=None)
    p.add_argument("--emit-plot-data", metavar="PATH", default=None,
                   help="also write ECDF and QQ coordinates as CSV")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("simulate", help="run a batch of coverage studies")
    p.add_argument("config", help="TOML or JSON batch config (or a bundled config name)")
    p.add_argument("--seed", type=int, default=None, help="overrides every seed in the config")
    p.add_argument("--output", "-o", default=None)
    p.add_argument("--quiet", "-q", action="store_true")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("enumerate", help="exact randomization distribution of a small population")
    p.add_argument("data", help="CSV with columns stratum, y1, y0 and optionally z")
    p.add_argument("--mode", choices=("distribution", "identities"), default="distribution")
    p.add_argument("--n1", type=int, default=None,
                   help="treated units per stratum (default: from z, else n_m // 2)")
    p.add_argument("--seed", type=int, default=None,
                   help="accepted for uniformity; enumeration is deterministic")
    p.add_argument("--output", "-o", default=None)
    p.set_defaults(func=cmd_enumerate)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except StrataBootError as exc:
        print(f"strata-boot: error: {exc}", file=sys.stderr)
        return _exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
