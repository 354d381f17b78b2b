"""``sfs`` command-line interface.

Exit codes: 0 success, 2 usage error, 3 numerical failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
import warnings
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .core import AUX_STREAM_BASE, ConfigError, NumericalFailure, RunConfig, derive_stream
from .data import DatasetFormatError, format_rows, load_csv, synth_moons, synth_scurve
from .integrators import simulate_coupled, simulate_paths
from .metrics import ConvergenceTable, mode_mass, required_budget, strong_rmse, w2_assignment, w2_exact_1d, w2_sliced
from .targets import BUILTIN_TARGETS, EmpiricalDataset, GaussianMixture, make_target

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4
SCHEMA_VERSION = 1


class UsageError(ConfigError):
    pass


def parse_step(text: str) -> float:
    """Parse ``2^-k``, ``1/N`` or a decimal step size."""
    s = text.strip().replace(" ", "")
    try:
        if "^" in s:
            base, exp = s.split("^", 1)
            value = float(Fraction(base) ** int(exp))
        else:
            value = float(Fraction(s))
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"cannot parse step size {text!r}") from None
    if not value > 0:
        raise argparse.ArgumentTypeError(f"step size must be positive: {text!r}")
    return value


def parse_step_list(text: str) -> list:
    return [parse_step(tok) for tok in text.split(",") if tok.strip()]


def _default_seed():
    env = os.environ.get("SFS_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"SFS_SEED must be an integer, got {env!r}") from None


def _manifest_path(out: Path) -> Path:
    return out.with_name(out.stem + ".manifest.json")


def _write_manifest(path, command, args, started, extra=None):
    payload = {
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "args": args,
        "version": __version__,
        "duration_s": round(time.perf_counter() - started, 6),
    }
    payload.update(extra or {})
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _resolved(ns) -> dict:
    return {k: v for k, v in vars(ns).items() if k not in ("func", "command")}


# --- sample ---------------------------------------------------------------


def _sample_config(ns) -> RunConfig:
    base = {}
    if ns.config:
        base = RunConfig.from_json(Path(ns.config)).to_dict()
    flags = {
        "dim": ns.dim,
        "beta": ns.beta,
        "n_steps": ns.steps,
        "scheme": ns.scheme,
        "drift": ns.drift,
        "mc_samples": ns.mc_samples,
        "paths": ns.paths,
        "seed": ns.seed,
        "out": ns.out,
    }
    merged = {**base, **{k: v for k, v in flags.items() if v is not None}}
    defaults = {"beta": 1.0, "n_steps": 100, "scheme": "srk", "drift": "exact", "paths": 1000}
    for k, v in defaults.items():
        merged.setdefault(k, v)
    if merged.get("seed") is None:
        merged["seed"] = _default_seed()
    return merged


def cmd_sample(ns) -> int:
    started = time.perf_counter()
    merged = _sample_config(ns)
    drift = merged["drift"]
    if drift == "mc" and merged.get("mc_samples") is None:
        raise UsageError("--mc-samples is required with --drift mc")
    if drift != "mc" and merged.get("mc_samples") is not None:
        raise UsageError("--mc-samples only applies to --drift mc")
    if drift == "empirical":
        if not ns.data:
            raise UsageError("--data is required with --drift empirical")
        if merged["scheme"] == "ula":
            raise UsageError("--scheme ula needs a target density, not --drift empirical")
    elif ns.data:
        raise UsageError("--data only applies to --drift empirical")
    if merged.get("out") is None:
        raise UsageError("--out is required")

    target = dataset = None
    shift = scale = None
    if drift == "empirical":
        dataset = load_csv(ns.data)
        if ns.standardize:
            x = dataset.samples
            shift, sd = x.mean(axis=0), x.std(axis=0)
            scale = np.where(sd > 0, sd, 1.0)
            dataset = EmpiricalDataset((x - shift) / scale)
        merged.setdefault("dim", dataset.dim)
    else:
        if ns.target is None:
            raise UsageError("--target is required unless --drift empirical")
        target = make_target(ns.target, merged.get("dim"))
        merged.setdefault("dim", target.dim)
        if drift == "exact" and merged["scheme"] != "ula" and not isinstance(target, GaussianMixture):
            raise UsageError(f"--drift exact needs a Gaussian-mixture target; {ns.target!r} is not one (use --drift mc)")
    merged["dim"] = merged.get("dim") or (dataset.dim if dataset is not None else target.dim)
    config = RunConfig(**merged, ula_step=ns.ula_step)

    result = simulate_paths(config, target, dataset, n_jobs=ns.threads)
    samples = result.samples
    if scale is not None:
        samples = samples * scale + shift
    out = Path(config.out)
    out.write_text(format_rows(samples), newline="\n")
    args = _resolved(ns)
    args.update({"config": None, "seed": config.seed, "dim": config.dim, "beta": config.beta,
                 "steps": config.n_steps, "scheme": config.scheme, "drift": config.drift,
                 "mc_samples": config.mc_samples, "paths": config.paths, "out": config.out})
    meta = dict(result.meta)
    if drift == "empirical":
        meta["standardize"] = bool(ns.standardize)
    _write_manifest(
        _manifest_path(out),
        "sample",
        args,
        started,
        {
            "config": config.to_dict(),
            "seed": config.seed,
            "aborted": result.n_aborted,
            "aborted_paths": {str(k): v for k, v in result.aborted.items()},
            "run": meta,
        },
    )
    if result.n_aborted:
        print(f"warning: {result.n_aborted} path(s) aborted and were excluded", file=sys.stderr)
    return EXIT_OK


# --- converge -------------------------------------------------------------


def _plot_script(schemes, tables):
    lines = [
        "# gnuplot script: strong convergence of coupled discretisations",
        'set datafile separator ","',
        "set logscale xy 2",
        'set xlabel "step size h"',
        'set ylabel "RMSE at t = 1"',
        "set key top left",
        "set grid",
    ]
    plots = []
    for s in schemes:
        slope = tables[s].slope
        plots.append(f'"convergence_{s}.csv" using 1:2 skip 1 with linespoints title "{s} (slope {slope:.3f})"')
    plots.append('x**1.5 with lines dashtype 2 title "order 1.5"')
    plots.append('x with lines dashtype 3 title "order 1"')
    lines.append("plot " + ", \\\n     ".join(plots))
    return "\n".join(lines) + "\n"


def cmd_converge(ns) -> int:
    started = time.perf_counter()
    schemes = [s.strip() for s in ns.schemes.split(",") if s.strip()]
    for s in schemes:
        if s not in ("srk", "euler"):
            raise UsageError(f"--schemes accepts srk and euler, not {s!r}")
    h_ref = ns.h_ref
    h_list = sorted(set(ns.h_list), reverse=True)
    for h in h_list:
        m = h / h_ref
        if abs(m - round(m)) > 1e-9 * max(1.0, m) or round(m) < 1:
            raise UsageError(f"--h-ref {h_ref!r} does not divide step {h!r}")
    if len([h for h in h_list if h != h_ref]) < 3:
        raise UsageError("order fit needs at least 3 step sizes different from --h-ref")
    seed = ns.seed if ns.seed is not None else _default_seed()
    target = make_target(ns.target, ns.dim)
    if not isinstance(target, GaussianMixture):
        raise UsageError("convergence studies need a Gaussian-mixture target (exact drift)")
    config = RunConfig(dim=target.dim, beta=ns.beta, n_steps=2, scheme=schemes[0], drift="exact", paths=ns.paths, seed=seed)
    run = simulate_coupled(config, target, h_ref, h_list, schemes=schemes, n_jobs=ns.threads)

    out_dir = Path(ns.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tables = {}
    for s in schemes:
        table = ConvergenceTable()
        for h in h_list:
            table.add(h, strong_rmse(run.reference[s], run.terminals[(s, h)]), ns.paths)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            table.fit()
        for w in caught:
            print(f"warning: {w.message}", file=sys.stderr)
        tables[s] = table
        (out_dir / f"convergence_{s}.csv").write_text(table.to_csv(), newline="\n")
        print(f"{s}: slope={table.slope:.4f} intercept={table.intercept:.4f}")
    (out_dir / "convergence.gp").write_text(_plot_script(schemes, tables))
    args = _resolved(ns)
    args["seed"] = seed
    _write_manifest(
        out_dir / "manifest.json",
        "converge",
        args,
        started,
        {"seed": seed, "slopes": {s: tables[s].slope for s in schemes}},
    )
    return EXIT_OK


# --- datagen --------------------------------------------------------------


def cmd_datagen(ns) -> int:
    started = time.perf_counter()
    seed = ns.seed if ns.seed is not None else _default_seed()
    rng = derive_stream(seed, AUX_STREAM_BASE + (1 << 32))
    if ns.kind == "moons":
        ds = synth_moons(ns.n, ns.noise, rng)
    elif ns.kind == "scurve":
        ds = synth_scurve(ns.n, ns.noise, rng)
    else:
        raise UsageError(f"unknown dataset kind {ns.kind!r}")
    out = Path(ns.out)
    out.write_text(format_rows(ds.samples), newline="\n")
    args = _resolved(ns)
    args["seed"] = seed
    _write_manifest(_manifest_path(out), "datagen", args, started, {"seed": seed, "noise_convention": ns.noise})
    return EXIT_OK


# --- metrics / budget -----------------------------------------------------


def _load_modes(spec):
    if spec in BUILTIN_TARGETS:
        modes = make_target(spec).modes
        if modes is None:
            raise UsageError(f"builtin target {spec!r} has no point modes")
        return modes
    data = json.loads(Path(spec).read_text())
    if isinstance(data, dict):
        if "means" not in data:
            raise UsageError("modes JSON object must contain 'means'")
        data = data["means"]
    return np.asarray(data, dtype=np.float64)


def cmd_metrics(ns) -> int:
    started = time.perf_counter()
    a = load_csv(ns.a).samples
    if ns.metric == "mode-mass":
        if not ns.modes:
            raise UsageError("--modes is required for mode-mass")
        frac = mode_mass(a, _load_modes(ns.modes))
        result = {"metric": ns.metric, "value": [float(v) for v in frac], "method": "nearest-mode"}
    else:
        if not ns.b:
            raise UsageError(f"--b is required for {ns.metric}")
        b = load_csv(ns.b).samples
        if ns.metric == "w2-sliced":
            seed = ns.seed if ns.seed is not None else _default_seed()
            est = w2_sliced(a, b, ns.projections, seed)
        elif ns.metric == "w2-1d":
            if a.shape[1] != 1 or b.shape[1] != 1:
                raise UsageError("w2-1d needs one-dimensional samples")
            est = w2_exact_1d(a[:, 0], b[:, 0])
        else:
            est = w2_assignment(a, b)
        result = {"metric": ns.metric, "value": est.value, "method": est.method}
    print(json.dumps(result))
    if ns.manifest:
        _write_manifest(ns.manifest, "metrics", _resolved(ns), started, {"result": result})
    return EXIT_OK


def cmd_budget(ns) -> int:
    started = time.perf_counter()
    n, m = required_budget(ns.epsilon, ns.dim, ns.constant)
    result = {"N": n, "M": m}
    print(json.dumps(result))
    if ns.manifest:
        _write_manifest(ns.manifest, "budget", _resolved(ns), started, {"result": result})
    return EXIT_OK


# --- replay ---------------------------------------------------------------


def cmd_replay(ns) -> int:
    manifest = json.loads(Path(ns.manifest_file).read_text())
    if manifest.get("schema_version") != SCHEMA_VERSION:
        raise UsageError(f"unsupported manifest schema {manifest.get('schema_version')!r}")
    command = manifest["command"]
    if command not in COMMANDS:
        raise UsageError(f"manifest names unknown command {command!r}")
    args = dict(manifest["args"])
    if ns.threads is not None:
        args["threads"] = ns.threads
    if ns.out is not None:
        key = {"sample": "out", "datagen": "out", "converge": "out_dir"}.get(command)
        if key is None:
            raise UsageError(f"--out cannot redirect a {command} run")
        args[key] = ns.out
    return COMMANDS[command](argparse.Namespace(**args))


COMMANDS = {
    "sample": cmd_sample,
    "converge": cmd_converge,
    "datagen": cmd_datagen,
    "metrics": cmd_metrics,
    "budget": cmd_budget,
}


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sfs", description="Schrodinger-Follmer diffusion samplers")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    threads = dict(type=_positive_int, default=os.cpu_count() or 1, help="worker threads (speed only)")

    p = sub.add_parser("sample", help="draw terminal samples")
    p.add_argument("--config", help="RunConfig JSON; explicit flags override its values")
    p.add_argument("--target", help=f"builtin ({', '.join(BUILTIN_TARGETS)}) or mixture spec .json")
    p.add_argument("--dim", type=_positive_int)
    p.add_argument("--scheme", choices=["srk", "euler", "ula"])
    p.add_argument("--drift", choices=["exact", "mc", "empirical"])
    p.add_argument("--beta", type=float)
    p.add_argument("--steps", type=int)
    p.add_argument("--paths", type=_positive_int)
    p.add_argument("--mc-samples", type=_positive_int)
    p.add_argument("--data", help="CSV dataset for --drift empirical")
    p.add_argument("--standardize", action="store_true", help="centre and scale --data first")
    p.add_argument("--ula-step", type=float, help="Langevin step size (default 1/steps)")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--threads", **threads)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("converge", help="strong convergence study with coupled paths")
    p.add_argument("--target", default="circle")
    p.add_argument("--dim", type=_positive_int)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--schemes", default="srk,euler")
    p.add_argument("--h-list", type=parse_step_list, default=parse_step_list("2^-5,2^-6,2^-7,2^-8,2^-9"))
    p.add_argument("--h-ref", type=parse_step, default=parse_step("2^-12"))
    p.add_argument("--paths", type=_positive_int, default=256)
    p.add_argument("--seed", type=int)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--threads", **threads)
    p.set_defaults(func=cmd_converge)

    p = sub.add_parser("datagen", help="write a synthetic dataset")
    p.add_argument("--kind", required=True, choices=["moons", "scurve"])
    p.add_argument("--n", type=_positive_int, default=1000)
    p.add_argument("--noise", type=float, default=0.05)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_datagen)

    p = sub.add_parser("metrics", help="compare sample files")
    p.add_argument("--a", required=True)
    p.add_argument("--b")
    p.add_argument("--metric", required=True, choices=["w2-sliced", "w2-1d", "w2-assign", "mode-mass"])
    p.add_argument("--projections", type=_positive_int, default=128)
    p.add_argument("--modes", help="builtin target name or JSON list of points / mixture spec")
    p.add_argument("--seed", type=int)
    p.add_argument("--manifest", help="also write a run manifest here")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("budget", help="step and sample counts for a target accuracy")
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--dim", type=_positive_int, required=True)
    p.add_argument("--constant", type=float, default=1.0)
    p.add_argument("--manifest", help="also write a run manifest here")
    p.set_defaults(func=cmd_budget)

    p = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    p.add_argument("manifest_file")
    p.add_argument("--threads", type=_positive_int)
    p.add_argument("--out", help="redirect the primary output")
    p.set_defaults(func=cmd_replay)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return ns.func(ns)
    except DatasetFormatError as exc:
        print(f"sfs: error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ConfigError as exc:
        print(f"sfs {ns.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericalFailure, FloatingPointError) as exc:
        print(f"sfs: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, json.JSONDecodeError) as exc:
        print(f"sfs: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
