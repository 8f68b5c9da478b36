"""Command-line front end.

Exit codes: 0 success, 2 usage or parse error, 3 validation failure,
4 runtime failure (diverged simulation, singular factor, oracle failure).
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, scenarios, trace_io
from .config import ConfigError, ValidationError, from_dict, parse_text
from .oracle import OracleError, OracleSolution
from .sim import SimulationError, metrics, simulate

EXIT_PARSE = 2
EXIT_VALIDATION = 3
EXIT_RUNTIME = 4

OUT_ENV = "ADAPTIVE_TVOPT_OUT"
REPORT_WINDOW = (15.0, 20.0)


def _raw_source(ref: str) -> dict:
    """Config mapping for a file path or a ``builtin:<name>`` / bare builtin name."""
    name = ref.removeprefix("builtin:")
    if ref.startswith("builtin:") or (name in scenarios.BUILTINS and not Path(ref).exists()):
        if name not in scenarios.BUILTINS:
            raise ConfigError(f"unknown builtin scenario {name!r}; available: {', '.join(scenarios.BUILTINS)}")
        return scenarios.BUILTINS[name]()
    path = Path(ref)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    return parse_text(text, str(path))


def _load(ref: str, step=None, t_end=None, seed=None):
    raw = _raw_source(ref)
    if step is not None or t_end is not None:
        integ = dict(raw.get("integrator") or {})
        if step is not None:
            integ["step"] = step
        if t_end is not None:
            integ["t_end"] = t_end
        raw["integrator"] = integ
    if seed is not None:
        raw["options"] = {**(raw.get("options") or {}), "seed": seed}
    return from_dict(raw)


def report_window(t_end: float) -> tuple[float, float]:
    """[15, 20] when the run covers it, otherwise the last quarter of the run."""
    if t_end >= REPORT_WINDOW[1]:
        return REPORT_WINDOW
    return 0.75 * t_end, t_end


def _out_dir(args_out, scenario) -> Path:
    if args_out:
        return Path(args_out)
    if scenario.raw["output"]["dir"]:
        return Path(scenario.raw["output"]["dir"])
    return Path(os.environ.get(OUT_ENV, "runs")) / scenario.name


def _run_one(ref, args, out_override=None) -> str:
    scenario = _load(ref, args.step, args.t_end, args.seed)
    trace = simulate(scenario)
    out = _out_dir(out_override or args.out, scenario)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = trace_io.write_csv(trace, out / scenario.raw["output"]["trace"])
    (out / "config.yaml").write_text(scenario.dump())
    if args.npz:
        trace_io.write_npz(trace, csv_path.with_suffix(".npz"), scenario.to_dict())
    if not args.no_plot:
        from .plotting import plot_trace

        plot_trace(trace_io.read_csv(csv_path), csv_path.with_suffix(".svg"), title=scenario.name)
    window = report_window(scenario.integrator.t_end)
    m = metrics(trace, window)
    return (
        f"{scenario.name}: max tracking error over [{window[0]:g}, {window[1]:g}] = {m.max_tracking_error:.4g}, "
        f"max consensus error = {m.max_consensus_error:.4g}; trace -> {csv_path}"
    )


def cmd_run(args) -> int:
    if args.all:
        if args.scenario:
            raise ConfigError("give either a scenario or --all, not both")
        base = Path(args.out) if args.out else Path(os.environ.get(OUT_ENV, "runs"))
        for name in scenarios.BUILTINS:
            print(_run_one(f"builtin:{name}", args, out_override=base / name), flush=True)
        return 0
    if not args.scenario:
        raise ConfigError("run: missing scenario (a config path or builtin:<name>)")
    print(_run_one(args.scenario, args))
    return 0


def cmd_validate(args) -> int:
    scenario = _load(args.config)
    print(f"{scenario.name}: ok ({scenario.controller}, {scenario.n_agents} agent(s), dim {scenario.dim})")
    if args.dump:
        sys.stdout.write(scenario.dump())
    return 0


def cmd_oracle(args) -> int:
    scenario = _load(args.config)
    guess = np.mean(np.asarray(scenario.initial["x"], dtype=float), axis=0)
    sol = OracleSolution.for_objectives(scenario.objectives, x0=guess)
    x = sol.x_star(args.t)
    print(f"x*({args.t:g}) = [" + ", ".join(format(float(v) + 0.0, ".17g") for v in x) + "]")
    return 0


def cmd_list(args) -> int:
    width = max(len(n) for n in scenarios.BUILTINS)
    for name, fn in scenarios.BUILTINS.items():
        doc = (fn.__doc__ or "").strip().splitlines()[0]
        print(f"builtin:{name:<{width}}  {doc}")
    return 0


def cmd_plot(args) -> int:
    from .plotting import plot_trace

    try:
        table = trace_io.read_csv(args.trace)
    except OSError as exc:
        raise ConfigError(f"cannot read {args.trace}: {exc.strerror}") from None
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    out = args.out or str(Path(args.trace).with_suffix(".svg"))
    print(plot_trace(table, out))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="adaptive-tvopt",
        description="Adaptive tracking of time-varying optima for single- and multi-agent systems.",
    )
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    run = sub.add_parser("run", help="simulate a scenario and write its trace")
    run.add_argument("scenario", nargs="?", help="config path or builtin:<name>")
    run.add_argument("--out", help=f"output directory (default: ${OUT_ENV}/<name> or runs/<name>)")
    run.add_argument("--step", type=float, help="override the integration step")
    run.add_argument("--t-end", type=float, help="override the horizon")
    run.add_argument("--seed", type=int, help="seed for randomized scenarios (sensor noise)")
    run.add_argument("--all", action="store_true", help="run every builtin scenario")
    run.add_argument("--no-plot", action="store_true", help="skip the SVG figure")
    run.add_argument("--npz", action="store_true", help="also write a binary trace with estimates and config")
    run.set_defaults(func=cmd_run)

    val = sub.add_parser("validate", help="parse and check a config")
    val.add_argument("config")
    val.add_argument("--dump", action="store_true", help="print the normalized config")
    val.set_defaults(func=cmd_validate)

    orc = sub.add_parser("oracle", help="print the optimum x*(T)")
    orc.add_argument("config")
    orc.add_argument("--t", type=float, required=True)
    orc.set_defaults(func=cmd_oracle)

    lst = sub.add_parser("list", help="list builtin scenarios")
    lst.set_defaults(func=cmd_list)

    plt = sub.add_parser("plot", help="render a trace CSV as vector graphics")
    plt.add_argument("trace")
    plt.add_argument("--out", help="output file; suffix picks the format (default: <trace>.svg)")
    plt.set_defaults(func=cmd_plot)
    return p


def run_cli(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except ValidationError as exc:
        print(f"validation failed: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (SimulationError, OracleError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
