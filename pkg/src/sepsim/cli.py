"""Command-line front end for the exclusion-process toolkit.

Every command echoes its configuration into each output file so a run can be
reproduced from the file alone: CSV files start with a `# config: {...}`
comment line, JSON files carry a `config` key. With `--deterministic` the
echo omits the timestamp and repeated runs are byte-identical.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .core import Configuration, ModelParams, default_initial_configuration
from .dual import (
    estimate_absorption,
    one_particle_success,
    pair_absorption_exact,
    transient_dual_moment,
)
from .errors import SepsimError, ValidationError
from .exact import (
    build_generator,
    occupation_profile,
    pair_moments,
    stationary_distribution,
)
from .forward import (
    default_schedule,
    estimate_stationary_moments,
    transient_moment,
)
from .ladder import gamma_closed_form, ladder_tables, simulate_aux_walk
from .moments import (
    build_moment_system,
    field_from_configuration,
    integrate_moments,
    stationary_moments,
)


def _count(text: str) -> int:
    """Positive count, scientific notation accepted ("1e6")."""
    try:
        value = int(float(text))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not a count: {text!r}") from exc
    if value < 1:
        raise argparse.ArgumentTypeError(f"count must be >= 1, got {text!r}")
    return value


def _int_list(text: str) -> list[int]:
    try:
        items = [int(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not a comma-separated int list: {text!r}") from exc
    if not items:
        raise argparse.ArgumentTypeError("empty list")
    return items


def _float_pair(text: str) -> tuple[float, float]:
    parts = text.split(",")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"expected two comma-separated values: {text!r}")
    try:
        return float(parts[0]), float(parts[1])
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not numbers: {text!r}") from exc


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _config_echo(args: argparse.Namespace, command: str, fields: dict) -> dict:
    cfg = {"command": command}
    cfg.update(fields)
    if not getattr(args, "deterministic", False):
        cfg["timestamp"] = datetime.now(timezone.utc).isoformat()
    return cfg


def _csv_text(config: dict, header: list[str], rows) -> str:
    lines = ["# config: " + json.dumps(config, sort_keys=True), ",".join(header)]
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    return "\n".join(lines) + "\n"


def _json_text(config: dict, payload: dict) -> str:
    return json.dumps({"config": config, **payload}, sort_keys=True, indent=2) + "\n"


def _write(path: str | None, text: str) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _stem(output: str) -> str:
    path = Path(output)
    if path.suffix in (".csv", ".json"):
        return str(path.with_suffix(""))
    return output


def _derived(output: str | None, suffix: str) -> str | None:
    if output is None:
        return None
    return f"{_stem(output)}_{suffix}"


def _params(args: argparse.Namespace) -> ModelParams:
    return ModelParams(size=args.size, rate=args.rate, seed=args.seed)


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--size", type=int, required=True, help="number of bulk sites S")
    p.add_argument("--rate", type=float, default=1.0, help="swap rate per bond")
    p.add_argument("--seed", type=int, default=1, help="base RNG seed")


def _add_output_flags(p: argparse.ArgumentParser, formats=("csv", "json")) -> None:
    p.add_argument("--output", default=None, help="output path (stdout if omitted)")
    if formats:
        p.add_argument("--format", choices=formats, default=formats[0])
    p.add_argument(
        "--deterministic",
        action="store_true",
        help="omit the timestamp so repeated runs are byte-identical",
    )


def cmd_exact(args: argparse.Namespace) -> int:
    params = _params(args)
    tol = args.tol if args.tol is not None else 1e-13
    gen = build_generator(params)
    pi = stationary_distribution(gen, tol=tol)
    profile = occupation_profile(pi)
    m2 = pair_moments(pi)
    s = params.size
    linear = np.arange(1, s + 1) / (s + 1)
    max_dev = float(np.abs(profile - linear).max())
    print(f"max |m1(x) - x/(S+1)| = {max_dev:.3e}")
    cfg = _config_echo(
        args, "exact", {"size": s, "rate": params.rate, "tol": tol}
    )
    m1_rows = [(x, float(profile[x - 1])) for x in range(1, s + 1)]
    m2_rows = [(x, y, val) for (x, y), val in sorted(m2.items())]
    states = [
        format(state, f"0{s}b")[::-1]  # site 1 leftmost
        for state in range(pi.probabilities.shape[0])
    ]
    pi_rows = [(states[i], float(pi.probabilities[i])) for i in range(len(states))]
    if args.format == "json":
        payload = {
            "max_m1_deviation": max_dev,
            "m1": [[x, v] for x, v in m1_rows],
            "m2": [[x, y, v] for x, y, v in m2_rows],
            "pi": {state: prob for state, prob in pi_rows},
            "residual": pi.residual,
        }
        _write(args.output, _json_text(cfg, payload))
    else:
        _write(_derived(args.output, "m1.csv"), _csv_text(cfg, ["x", "m1"], m1_rows))
        _write(
            _derived(args.output, "m2.csv"),
            _csv_text(cfg, ["x", "y", "m2"], m2_rows),
        )
        _write(
            _derived(args.output, "pi.csv"),
            _csv_text(cfg, ["state", "probability"], pi_rows),
        )
    return 0


def cmd_simulate(args: argparse.Namespace) -> int:
    params = _params(args)
    schedule = default_schedule(
        params,
        n_replicas=args.replicas,
        n_samples=args.samples,
        burn_in=args.burn_in,
    )
    if args.points is not None:
        sets = [tuple(args.points)]
    else:
        sets = [(x,) for x in range(1, params.size + 1)]
    est = estimate_stationary_moments(
        params, sets, schedule, params.stream(0), n_workers=args.threads
    )
    if args.tol is not None:
        worst = float(np.nanmax(est.stderrs))
        if worst > args.tol:
            print(
                f"warning: achieved stderr {worst:.3e} exceeds requested "
                f"tolerance {args.tol:.3e}; raise --replicas or --samples",
                file=sys.stderr,
            )
    cfg = _config_echo(
        args,
        "simulate",
        {
            "size": params.size,
            "rate": params.rate,
            "seed": params.seed,
            "replicas": schedule.n_replicas,
            "samples": schedule.n_samples,
            "burn_in": schedule.burn_in,
            "sample_interval": schedule.sample_interval,
            "points": list(args.points) if args.points is not None else None,
        },
    )
    rows = [
        (";".join(str(p) for p in pts), float(e), float(se))
        for pts, e, se in zip(est.point_sets, est.estimates, est.stderrs)
    ]
    if args.format == "json":
        payload = {
            "estimates": [
                {"points": list(pts), "estimate": float(e), "stderr": float(se)}
                for pts, e, se in zip(est.point_sets, est.estimates, est.stderrs)
            ],
            "total_events": est.total_events,
        }
        _write(args.output, _json_text(cfg, payload))
    else:
        _write(
            args.output,
            _csv_text(cfg, ["points", "estimate", "stderr"], rows),
        )
    return 0


def cmd_dual(args: argparse.Namespace) -> int:
    params = _params(args)
    pts = tuple(args.points)
    est, se = estimate_absorption(params, pts, args.replicas, params.stream(0))
    exact_val: float | None = None
    if len(pts) == 1:
        exact_val = one_particle_success(params, pts[0])
    elif len(pts) == 2 and params.size <= 1024:
        exact_val = pair_absorption_exact(params).value(pts[0], pts[1])
    cfg = _config_echo(
        args,
        "dual",
        {
            "size": params.size,
            "rate": params.rate,
            "seed": params.seed,
            "points": list(pts),
            "replicas": args.replicas,
        },
    )
    if args.format == "json":
        payload = {"estimate": est, "stderr": se, "exact": exact_val}
        _write(args.output, _json_text(cfg, payload))
    else:
        row = (";".join(str(p) for p in pts), est, se, exact_val)
        _write(
            args.output,
            _csv_text(cfg, ["points", "estimate", "stderr", "exact"], [row]),
        )
    return 0


def cmd_ladder(args: argparse.Namespace) -> int:
    params = _params(args)
    x0, y0 = args.start
    kwargs = {} if args.tol is None else {"tol": args.tol}
    table = ladder_tables(params, x0, y0, k_max=args.kmax, **kwargs)
    cfg = _config_echo(
        args,
        "ladder",
        {
            "size": params.size,
            "rate": params.rate,
            "start": [x0, y0],
            "kmax": args.kmax,
        },
    )
    rows = [
        (
            k,
            float(table.c_start[k]),
            gamma_closed_form(params.size, k),
            float(table.p[k]),
        )
        for k in range(1, table.k_max + 1)
    ]
    p0 = float(table.p[0])
    summary = {
        "P0": p0,
        "P_inf": table.p_inf,
        "bound": table.final_bound,
        "slack": table.final_bound - (p0 - table.p_inf),
    }
    header = ["k", "C_k", "gamma_k", "P_k"]
    if args.format == "json":
        payload = {
            "rows": [list(r) for r in rows],
            "columns": header,
            "summary": summary,
        }
        _write(args.output, _json_text(cfg, payload))
    else:
        _write(args.output, _csv_text(cfg, header, rows))
        _write(_derived(args.output, "summary.json"), _json_text(cfg, {"summary": summary}))
    return 0


def cmd_odes(args: argparse.Namespace) -> int:
    params = _params(args)
    s = params.size
    k_top = min(2, s)
    system = build_moment_system(params, k_top)
    tol = args.tol if args.tol is not None else 1e-12
    if args.time is None:
        field = stationary_moments(system, tol=tol)
        time_note: float | None = None
    else:
        start = field_from_configuration(
            system, default_initial_configuration(params)
        )
        field = integrate_moments(system, start, args.time)
        time_note = args.time
    if k_top == 2:
        m1_field = field.lower
        m2_rows = [
            (pts[0], pts[1], float(v))
            for pts, v in zip(field.system.subsets, field.values)
        ]
    else:
        m1_field = field
        m2_rows = []
    assert m1_field is not None
    m1_rows = [
        (pts[0], float(v))
        for pts, v in zip(m1_field.system.subsets, m1_field.values)
    ]
    cfg = _config_echo(
        args,
        "odes",
        {"size": s, "rate": params.rate, "time": time_note, "tol": tol},
    )
    if args.format == "json":
        payload = {
            "m1": [[x, v] for x, v in m1_rows],
            "m2": [[x, y, v] for x, y, v in m2_rows],
            "time": time_note,
        }
        _write(args.output, _json_text(cfg, payload))
    else:
        _write(_derived(args.output, "m1.csv"), _csv_text(cfg, ["x", "m1"], m1_rows))
        if m2_rows:
            _write(
                _derived(args.output, "m2.csv"),
                _csv_text(cfg, ["x", "y", "m2"], m2_rows),
            )
    return 0


def cmd_duality_check(args: argparse.Namespace) -> int:
    params = _params(args)
    pts = tuple(args.points)
    if args.initial is not None:
        config0 = Configuration.from_interior_string(args.initial)
        if config0.size != params.size:
            raise ValidationError(
                f"--initial has {config0.size} bulk sites, --size is {params.size}"
            )
    else:
        config0 = default_initial_configuration(params)
    lhs, lhs_se = transient_moment(
        params, config0, args.time, pts, args.replicas, params.stream(1)
    )
    rhs, rhs_se = transient_dual_moment(
        params, pts, config0, args.time, args.replicas, params.stream(2)
    )
    denom = math.hypot(lhs_se, rhs_se)
    if denom > 0:
        z = (lhs - rhs) / denom
    else:
        z = 0.0 if lhs == rhs else math.inf
    cfg = _config_echo(
        args,
        "duality-check",
        {
            "size": params.size,
            "rate": params.rate,
            "seed": params.seed,
            "points": list(pts),
            "time": args.time,
            "replicas": args.replicas,
            "initial": config0.interior_string(),
        },
    )
    payload = {"lhs": lhs, "lhs_se": lhs_se, "rhs": rhs, "rhs_se": rhs_se, "z": z}
    _write(args.output, _json_text(cfg, payload))
    return 0


def cmd_aux(args: argparse.Namespace) -> int:
    result = simulate_aux_walk(
        args.size,
        args.kmax,
        args.replicas,
        ModelParams(size=args.size, seed=args.seed).stream(0),
    )
    cfg = _config_echo(
        args,
        "aux",
        {
            "size": args.size,
            "seed": args.seed,
            "kmax": args.kmax,
            "replicas": args.replicas,
        },
    )
    rows = [
        (
            k,
            float(result.gamma[k]),
            float(result.gamma_mc[k]),
            float(result.gamma_stderr[k]),
        )
        for k in range(1, args.kmax + 1)
    ]
    header = ["k", "gamma_k", "estimate", "stderr"]
    if args.format == "json":
        payload = {"rows": [list(r) for r in rows], "columns": header}
        _write(args.output, _json_text(cfg, payload))
    else:
        _write(args.output, _csv_text(cfg, header, rows))
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    a1, a2 = args.alphas
    if not (0.0 < a1 < a2 < 1.0):
        raise ValidationError(
            f"fractions must satisfy 0 < a1 < a2 < 1, got ({a1}, {a2})"
        )
    target = a1 * a2
    rows = []
    for s in args.grid:
        if s < 2:
            raise ValidationError(f"grid sizes must be >= 2, got {s}")
        params = ModelParams(size=s, rate=args.rate, seed=args.seed)
        x1 = math.floor(a1 * (s + 1))
        x2 = math.floor(a2 * (s + 1))
        if not 1 <= x1 < x2 <= s:
            raise ValidationError(
                f"fractions ({a1}, {a2}) give no ordered bulk pair at size {s}"
            )
        method = "dense" if s <= 1024 else "gauss_seidel"
        m2 = pair_absorption_exact(params, method=method).value(x1, x2)
        rows.append((s, x1, x2, m2, target, abs(m2 - target)))
    errors = np.array([r[5] for r in rows])
    sizes = np.array([float(r[0]) for r in rows])
    slope: float | None = None
    if len(rows) >= 2 and np.all(errors > 0):
        slope = float(np.polyfit(np.log(sizes), np.log(errors), 1)[0])
    cfg = _config_echo(
        args,
        "sweep",
        {
            "alphas": [a1, a2],
            "grid": list(args.grid),
            "rate": args.rate,
        },
    )
    header = ["S", "x1", "x2", "m2", "target", "abs_err"]
    summary = {"target": target, "slope": slope}
    if args.format == "json":
        payload = {
            "rows": [list(r) for r in rows],
            "columns": header,
            "summary": summary,
        }
        _write(args.output, _json_text(cfg, payload))
    else:
        _write(args.output, _csv_text(cfg, header, rows))
        _write(
            _derived(args.output, "summary.json"),
            _json_text(cfg, {"summary": summary}),
        )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sepsim",
        description="boundary-driven exclusion process: simulation and exact checks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("exact", help="exact stationary distribution and moments")
    _add_model_flags(p)
    p.add_argument("--tol", type=float, default=None)
    _add_output_flags(p)
    p.set_defaults(func=cmd_exact)

    p = sub.add_parser("simulate", help="stationary moments by forward Monte Carlo")
    _add_model_flags(p)
    p.add_argument("--replicas", type=_count, default=32)
    p.add_argument("--samples", type=_count, default=200)
    p.add_argument("--burn-in", type=float, default=None, help="burn-in model time")
    p.add_argument("--points", type=_int_list, default=None)
    p.add_argument("--tol", type=float, default=None, help="warn if stderr exceeds this")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    _add_output_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("dual", help="absorption probability of the dual walk")
    _add_model_flags(p)
    p.add_argument("--points", type=_int_list, required=True)
    p.add_argument("--replicas", type=_count, default=100_000)
    _add_output_flags(p)
    p.set_defaults(func=cmd_dual)

    p = sub.add_parser("ladder", help="meeting ladder between exclusion and free pairs")
    _add_model_flags(p)
    p.add_argument("--start", type=_int_list, required=True, metavar="X,Y")
    p.add_argument("--kmax", type=int, default=40)
    p.add_argument("--tol", type=float, default=None)
    _add_output_flags(p)
    p.set_defaults(func=cmd_ladder)

    p = sub.add_parser("odes", help="moment hierarchy: stationary solve or integration")
    _add_model_flags(p)
    p.add_argument("--time", type=float, default=None, help="integrate to this time")
    p.add_argument("--tol", type=float, default=None)
    _add_output_flags(p)
    p.set_defaults(func=cmd_odes)

    p = sub.add_parser(
        "duality-check", help="forward and dual transient estimates of one moment"
    )
    _add_model_flags(p)
    p.add_argument("--points", type=_int_list, required=True)
    p.add_argument("--time", type=float, required=True)
    p.add_argument("--replicas", type=_count, default=1_000_000)
    p.add_argument("--initial", default=None, help="bulk occupancy bits, site 1 first")
    _add_output_flags(p, formats=())
    p.set_defaults(func=cmd_duality_check)

    p = sub.add_parser("aux", help="reflected-walk return counts against the closed form")
    p.add_argument("--size", type=int, required=True)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--kmax", type=int, default=3)
    p.add_argument("--replicas", type=_count, default=1_000_000)
    _add_output_flags(p)
    p.set_defaults(func=cmd_aux)

    p = sub.add_parser("sweep", help="two-point moment against the product limit")
    p.add_argument("--alphas", type=_float_pair, default=(0.3, 0.7), metavar="A1,A2")
    p.add_argument(
        "--grid",
        type=_int_list,
        default=[32, 64, 128, 256, 512],
        metavar="S1,S2,...",
    )
    p.add_argument("--rate", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=1)
    _add_output_flags(p)
    p.set_defaults(func=cmd_sweep)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SepsimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
