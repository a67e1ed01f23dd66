"""Command-line surface: solve, bench, oracle, bp, tap, spectrum, convert.

Every solver command requires --seed and echoes its full run specification
into the output JSON, so any result can be reproduced from the file alone.
Exit codes: 0 success, 1 usage error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import bench as bench_mod
from .feedback import (
    ClosedLoopParams,
    TargetModulation,
    integrate_closedloop,
    solving_params,
)
from .gset import gset_to_instance, parse_gset, write_gset
from .instances import (
    instance_to_json_dict,
    load_instance_json,
    round_spins,
    energy as ising_energy,
)
from .messages import bp_energy_readout, bp_run, tap_run
from .openloop import (
    LogNoiseDecay,
    Nonlinearity,
    Schedule,
    TrajectoryWriter,
    integrate_openloop,
)
from .oracle import exhaustive_ground_states
from .spectral import min_eigvec_heuristic

SCHEMA_VERSION = 1
SOLVERS = ("open-loop", "closed-loop", "bp", "tap", "eigvec")

_PARAM_KEYS = {
    "open-loop": {
        "pump_start", "pump_end", "beta", "gamma", "gamma_log_c", "dt",
        "f_kind", "g_kind", "record_every", "diffusion",
    },
    "closed-loop": {
        "beta", "xi", "target", "epsilon", "pump", "dt", "f_kind", "g_kind",
        "gamma", "diffusion",
    },
    "bp": {"beta", "damping", "tol", "max_iters", "clamps"},
    "tap": {"beta", "tol", "max_iters", "variant"},
    "eigvec": set(),
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


def _load_instance(path: str, fmt: str | None, negate: bool):
    path = str(path)
    if fmt is None:
        fmt = "gset" if path.endswith((".gset", ".txt", ".g")) else "json"
    if fmt == "json":
        return load_instance_json(path, negate=negate), None
    graph = parse_gset(Path(path).read_text())
    instance, offset = gset_to_instance(graph, label=Path(path).stem)
    if negate:
        raise UsageError("--negate-j applies to JSON instances only")
    return instance, offset


def _emit(payload: dict, out: str | None):
    text = json.dumps(payload, indent=1)
    if out:
        Path(out).write_text(text)
    else:
        print(text)


def _validate_params(solver: str, params: dict) -> dict:
    allowed = _PARAM_KEYS[solver]
    unknown = set(params) - allowed
    if unknown:
        raise UsageError(
            f"unknown parameter(s) for {solver}: {sorted(unknown)}; "
            f"allowed: {sorted(allowed)}"
        )
    return params


def _build_solver(solver: str, steps: int, params: dict):
    """Map a validated parameter dict onto a runnable bench config."""
    p = dict(params)
    if solver == "open-loop":
        nonlin = Nonlinearity(
            p.get("f_kind", "cubic"), p.get("g_kind", "identity"),
            pump=p.get("pump_end", 1.5),
        )
        dt = p.get("dt", 0.01)
        noise = (
            LogNoiseDecay(p["gamma_log_c"])
            if "gamma_log_c" in p
            else p.get("gamma", 0.05)
        )
        schedule = Schedule(
            duration=steps * dt,
            dt=dt,
            pump=((0.0, p.get("pump_start", 0.5)), (1.0, p.get("pump_end", 1.5))),
            coupling=p.get("beta", 1.0),
            noise=noise,
        )
        return bench_mod.OpenLoopConfig(
            nonlinearity=nonlin, schedule=schedule,
            record_every=int(p.get("record_every", 1)),
        )
    if solver == "closed-loop":
        defaults = solving_params()
        overrides = {}
        if p.get("epsilon") is not None:
            overrides["modulation"] = TargetModulation(p["epsilon"])
        for key in ("beta", "xi", "target", "dt", "diffusion"):
            if key in p:
                overrides[key] = p[key]
        if "gamma" in p:
            overrides["noise"] = p["gamma"]
        if "f_kind" in p or "g_kind" in p or "pump" in p:
            overrides["nonlinearity"] = Nonlinearity(
                p.get("f_kind", defaults.nonlinearity.f_kind),
                p.get("g_kind", defaults.nonlinearity.g_kind),
                pump=p.get("pump", defaults.nonlinearity.pump),
            )
        clp = solving_params(**overrides)
        return bench_mod.ClosedLoopConfig(params=clp, steps=steps)
    if solver == "bp":
        return bench_mod.BPConfig(
            beta=p.get("beta", 1.0), iters=steps, damping=p.get("damping", 0.5)
        )
    if solver == "tap":
        return bench_mod.TapConfig(
            beta=p.get("beta", 0.5), iters=steps, variant=p.get("variant", "bolthausen")
        )
    if solver == "eigvec":
        return bench_mod.EigvecConfig()
    raise UsageError(f"unknown solver {solver!r}")


def _collect_params(args, solver: str) -> dict:
    mapping = {
        "pump_start": args.pump_start, "pump_end": args.pump_end,
        "beta": args.beta, "gamma": args.gamma, "gamma_log_c": args.gamma_log_c,
        "dt": args.dt, "f_kind": args.f_kind, "g_kind": args.g_kind,
        "xi": args.xi, "target": args.target, "epsilon": args.epsilon,
        "pump": args.pump, "damping": args.damping, "tol": args.tol,
        "max_iters": None, "variant": args.variant,
        "diffusion": args.diffusion,
    }
    params = {
        k: v for k, v in mapping.items() if v is not None and k in _PARAM_KEYS[solver]
    }
    return params


def _runspec_dict(args, solver: str, params: dict) -> dict:
    return {
        "input": args.input,
        "format": args.format,
        "solver": solver,
        "steps": args.steps,
        "seed": args.seed,
        "negate_j": bool(getattr(args, "negate_j", False)),
        "params": params,
    }


def _load_runspec(path: str):
    data = json.loads(Path(path).read_text())
    allowed = {
        "input", "format", "solver", "steps", "seed", "negate_j", "params", "out",
        "trace",
    }
    unknown = set(data) - allowed
    if unknown:
        raise UsageError(f"unknown run-spec key(s): {sorted(unknown)}")
    for key in ("input", "solver", "seed"):
        if key not in data:
            raise UsageError(f"run-spec missing required key {key!r}")
    if data["solver"] not in SOLVERS:
        raise UsageError(f"run-spec solver must be one of {SOLVERS}")
    params = data.get("params", {})
    if not isinstance(params, dict):
        raise UsageError("run-spec 'params' must be an object")
    _validate_params(data["solver"], params)
    return data


def _cmd_solve(args) -> int:
    if args.spec:
        spec = _load_runspec(args.spec)
        args.input = spec["input"]
        args.format = spec.get("format")
        args.solver = spec["solver"]
        args.steps = int(spec.get("steps", args.steps))
        args.seed = int(spec["seed"])
        args.negate_j = bool(spec.get("negate_j", False))
        args.out = spec.get("out", args.out)
        args.trace = spec.get("trace", args.trace)
        params = spec.get("params", {})
    else:
        if args.input is None:
            raise UsageError("solve: --input (or --spec) is required")
        if args.seed is None:
            raise UsageError("solve: --seed is required")
        params = _collect_params(args, args.solver)
    _validate_params(args.solver, params)
    instance, _ = _load_instance(args.input, args.format, args.negate_j)
    config = _build_solver(args.solver, args.steps, params)

    trace = None
    if args.trace:
        if args.solver == "open-loop":
            with TrajectoryWriter(args.trace) as tw:
                _, trace = integrate_openloop(
                    instance, config.nonlinearity, config.schedule, args.seed,
                    record_every=config.record_every, trace_writer=tw,
                )
        elif args.solver == "closed-loop":
            cols = ("min_e", "max_e", "a_current", "divergence")
            with TrajectoryWriter(args.trace, extra_columns=cols) as tw:
                _, trace = integrate_closedloop(
                    instance, config.params, config.steps, args.seed, trace_writer=tw
                )
        else:
            raise UsageError("--trace supports the dynamical solvers only")
    else:
        trace = config.run(instance, [args.seed])[0]

    payload = {
        "schema_version": SCHEMA_VERSION,
        "runspec": _runspec_dict(args, args.solver, params),
        "label": instance.label,
        "n": instance.n,
        "best_energy": trace.best_energy,
        "best_step": trace.best_step,
        "spins": [int(s) for s in trace.best_spins],
    }
    _emit(payload, args.out)
    return 0


def _cmd_bench(args) -> int:
    instances = []
    for path in args.input or []:
        inst, _ = _load_instance(path, args.format, args.negate_j)
        instances.append(inst)
    if args.sk:
        try:
            n_str, count_str, seed0_str = args.sk.split(",")
            n, count, seed0 = int(n_str), int(count_str), int(seed0_str)
        except ValueError:
            raise UsageError("--sk expects 'n,count,first_seed'")
        from .instances import generate_sk

        instances.extend(generate_sk(n, seed0 + k) for k in range(count))
    if not instances:
        raise UsageError("bench: no instances (use --input and/or --sk)")
    params = _collect_params(args, args.solver)
    config = _build_solver(args.solver, args.steps, params)
    targets = None
    if args.targets:
        targets = {
            k: float(v) for k, v in json.loads(Path(args.targets).read_text()).items()
        }
    records = bench_mod.run_grid(
        instances, config, args.runs, args.seed, targets=targets, threads=args.threads
    )
    grid = bench_mod.default_n_grid(config.budget)
    curve = bench_mod.success_probability(records, grid)
    ns = bench_mod.per_instance_ns(records, grid)
    summary = {
        "schema_version": SCHEMA_VERSION,
        "runspec": {
            "solver": args.solver, "steps": args.steps, "runs": args.runs,
            "seed": args.seed, "params": params,
            "instances": [inst.label for inst in instances],
        },
        "p0": {"n": [int(v) for v in curve.n_grid], "value": list(map(float, curve.p0))},
        "n_s": bench_mod.ns_of_curve(curve),
        "per_instance_n_s": {k: (v if np.isfinite(v) else None) for k, v in ns.items()},
        "n_s_summary": bench_mod.ns_summary(ns.values()),
    }
    prefix = args.out_prefix
    bench_mod.records_to_csv(records, f"{prefix}.records.csv")
    Path(f"{prefix}.summary.json").write_text(json.dumps(summary, indent=1))
    if args.emit_plot_data:
        bench_mod.curve_to_csv(curve, f"{prefix}.p0.csv")
    print(f"wrote {prefix}.records.csv and {prefix}.summary.json")
    return 0


def _cmd_oracle(args) -> int:
    instance, _ = _load_instance(args.input, args.format, args.negate_j)
    truth = exhaustive_ground_states(instance)
    payload = {
        "schema_version": SCHEMA_VERSION,
        "label": instance.label,
        "n": instance.n,
        "ground_energy": truth.ground_energy,
        "degeneracy": truth.degeneracy,
        "ground_states": truth.ground_states.tolist(),
    }
    _emit(payload, args.out)
    return 0


def _parse_clamps(raw) -> dict:
    clamps = {}
    for item in raw or []:
        try:
            idx, val = item.split(":")
            clamps[int(idx)] = int(val)
        except ValueError:
            raise UsageError(f"bad clamp {item!r}; expected 'index:+1' or 'index:-1'")
    return clamps


def _cmd_bp(args) -> int:
    instance, _ = _load_instance(args.input, args.format, args.negate_j)
    result = bp_run(
        instance, args.beta, args.seed,
        max_iters=args.max_iters, tol=args.tol, damping=args.damping,
        clamps=_parse_clamps(args.clamp),
    )
    decoded = bp_energy_readout(instance, result.magnetizations)
    payload = {
        "schema_version": SCHEMA_VERSION,
        "runspec": {
            "input": args.input, "solver": "bp", "beta": args.beta,
            "seed": args.seed, "damping": args.damping, "tol": args.tol,
            "max_iters": args.max_iters, "clamps": _parse_clamps(args.clamp),
        },
        "converged": result.converged,
        "iters": result.iterations,
        "magnetizations": list(map(float, result.magnetizations)),
        "rounded_energy": decoded.energy,
    }
    _emit(payload, args.out)
    return 0


def _cmd_tap(args) -> int:
    instance, _ = _load_instance(args.input, args.format, args.negate_j)
    result = tap_run(
        instance, args.beta, args.seed,
        max_iters=args.max_iters, tol=args.tol, variant=args.variant,
    )
    spins = round_spins(result.state.m_now)
    payload = {
        "schema_version": SCHEMA_VERSION,
        "runspec": {
            "input": args.input, "solver": "tap", "beta": args.beta,
            "seed": args.seed, "variant": args.variant, "tol": args.tol,
            "max_iters": args.max_iters,
        },
        "converged": result.converged,
        "iters": result.iterations,
        "magnetizations": list(map(float, result.state.m_now)),
        "rounded_energy": ising_energy(instance, spins),
    }
    _emit(payload, args.out)
    return 0


def _cmd_spectrum(args) -> int:
    instance, _ = _load_instance(args.input, args.format, args.negate_j)
    res = min_eigvec_heuristic(instance)
    payload = {
        "schema_version": SCHEMA_VERSION,
        "label": instance.label,
        "eigenvalue": res.eigenvalue,
        "residual": res.residual,
        "iterations": res.iterations,
        "eigenvector": list(map(float, res.eigenvector)),
        "rounded_spins": [int(s) for s in res.rounded.spins],
        "rounded_energy": res.rounded.energy,
    }
    _emit(payload, args.out)
    return 0


def _cmd_convert(args) -> int:
    graph = parse_gset(Path(args.input).read_text())
    instance, offset = gset_to_instance(graph, label=args.label or Path(args.input).stem)
    payload = instance_to_json_dict(instance)
    payload["maxcut_offset"] = offset
    _emit(payload, args.out)
    if args.roundtrip:
        Path(args.roundtrip).write_text(write_gset(graph))
    return 0


def _add_common(sub, seed_required: bool):
    sub.add_argument("--input", help="instance file (JSON or G-set)")
    sub.add_argument("--format", choices=("json", "gset"), default=None)
    sub.add_argument("--negate-j", action="store_true", dest="negate_j",
                     help="load with J -> -J (inputs stated in the flipped convention)")
    sub.add_argument("--out", default=None, help="output JSON path (default stdout)")
    if seed_required:
        sub.add_argument("--seed", type=int, required=True)


def build_parser() -> _Parser:
    parser = _Parser(prog="cimopt")
    subs = parser.add_subparsers(dest="command", required=True)

    solve = subs.add_parser("solve", help="run one solver on one instance")
    _add_common(solve, seed_required=False)
    solve.add_argument("--spec", help="JSON run-spec (overrides other flags)")
    solve.add_argument("--seed", type=int, default=None)
    solve.add_argument("--solver", choices=SOLVERS, default="closed-loop")
    solve.add_argument("--steps", type=int, default=20000)
    solve.add_argument("--trace", help="CSV trajectory dump (dynamics solvers)")
    for flag, kind in (
        ("--pump-start", float), ("--pump-end", float), ("--beta", float),
        ("--gamma", float), ("--gamma-log-c", float), ("--dt", float),
        ("--f-kind", str), ("--g-kind", str), ("--xi", float),
        ("--target", float), ("--epsilon", float), ("--pump", float),
        ("--damping", float), ("--tol", float), ("--variant", str),
        ("--diffusion", float),
    ):
        solve.add_argument(flag, type=kind, default=None)

    bench = subs.add_parser("bench", help="grid of (instance, seed) solver runs")
    bench.add_argument("--input", action="append", help="instance file; repeatable")
    bench.add_argument("--format", choices=("json", "gset"), default=None)
    bench.add_argument("--negate-j", action="store_true", dest="negate_j")
    bench.add_argument("--sk", help="generate SK instances: 'n,count,first_seed'")
    bench.add_argument("--solver", choices=SOLVERS, default="closed-loop")
    bench.add_argument("--steps", type=int, default=20000)
    bench.add_argument("--runs", type=int, default=10)
    bench.add_argument("--seed", type=int, required=True, help="master seed")
    bench.add_argument("--targets", help="JSON map label -> target energy")
    bench.add_argument("--threads", type=int,
                       default=int(os.environ.get("CIMOPT_THREADS", "1")))
    bench.add_argument("--out-prefix", default="bench")
    bench.add_argument("--emit-plot-data", action="store_true")
    for flag, kind in (
        ("--pump-start", float), ("--pump-end", float), ("--beta", float),
        ("--gamma", float), ("--gamma-log-c", float), ("--dt", float),
        ("--f-kind", str), ("--g-kind", str), ("--xi", float),
        ("--target", float), ("--epsilon", float), ("--pump", float),
        ("--damping", float), ("--tol", float), ("--variant", str),
        ("--diffusion", float),
    ):
        bench.add_argument(flag, type=kind, default=None)

    oracle = subs.add_parser("oracle", help="exhaustive ground states (n <= 24)")
    _add_common(oracle, seed_required=False)

    bp = subs.add_parser("bp", help="belief propagation marginals")
    _add_common(bp, seed_required=True)
    bp.add_argument("--beta", type=float, required=True)
    bp.add_argument("--max-iters", type=int, default=1000)
    bp.add_argument("--tol", type=float, default=1e-10)
    bp.add_argument("--damping", type=float, default=0.5)
    bp.add_argument("--clamp", action="append", help="pin a spin, e.g. 0:+1")

    tap = subs.add_parser("tap", help="TAP mean-field iteration")
    _add_common(tap, seed_required=True)
    tap.add_argument("--beta", type=float, required=True)
    tap.add_argument("--max-iters", type=int, default=2000)
    tap.add_argument("--tol", type=float, default=1e-10)
    tap.add_argument("--variant", choices=("bolthausen", "two_step"),
                     default="bolthausen")

    spectrum = subs.add_parser("spectrum", help="extreme eigenpair and its rounding")
    _add_common(spectrum, seed_required=False)

    convert = subs.add_parser("convert", help="G-set graph -> instance JSON")
    convert.add_argument("--input", required=True)
    convert.add_argument("--out", default=None)
    convert.add_argument("--label", default=None)
    convert.add_argument("--roundtrip", help="also re-emit the parsed graph here")

    return parser


_HANDLERS = {
    "solve": _cmd_solve,
    "bench": _cmd_bench,
    "oracle": _cmd_oracle,
    "bp": _cmd_bp,
    "tap": _cmd_tap,
    "spectrum": _cmd_spectrum,
    "convert": _cmd_convert,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _HANDLERS[args.command](args)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
