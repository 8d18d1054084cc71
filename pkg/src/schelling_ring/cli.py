"""``schelling-ring`` command line.

Every subcommand prints ``key=value`` lines on stdout and is a deterministic
function of its flags (no timings, no host details).  Exit status: 0 on
success, 1 when an experiment check fails, 2 on usage errors, 3 on I/O
errors.
"""

from __future__ import annotations

import argparse
import enum
import inspect
import math
import sys
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import theory
from .ring import (
    Model,
    ModelParams,
    happiness_threshold,
    parse_tau,
    read_snapshot,
    same_type_counts,
    write_snapshot,
)

EXIT_OK, EXIT_CHECK, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3

# kept literal so that light commands (kappa, ratio, regime) do not pay for
# importing numba and scipy; tests check these against the modules
SUITE_NAMES = ("bk", "mc", "thm1", "thm3", "thm5")
TIME_SCALES = ("rank", "linear")


class Command(enum.Enum):
    SIMULATE = "simulate"
    ANALYZE = "analyze"
    KAPPA = "kappa"
    RATIO = "ratio"
    REGIME = "regime"
    EXPERIMENT = "experiment"
    RENDER = "render"
    WORMALD = "wormald"


@dataclass
class ParsedCommand:
    command: Command
    args: argparse.Namespace


def _tau(text: str):
    try:
        return parse_tau(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _stop(text: str):
    from .dynamics import StopCondition

    try:
        return StopCondition.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _fmt(v) -> str:
    if isinstance(v, float):
        if math.isinf(v):
            return "-inf" if v < 0 else "inf"
        return repr(v)
    if isinstance(v, enum.Enum):
        return str(v.value)
    return str(v)


def emit(out, **pairs) -> None:
    for k, v in pairs.items():
        print(f"{k}={_fmt(v)}", file=out)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="schelling-ring", description="One-dimensional Schelling segregation on a ring.")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def model_flags(sp, need_n=True):
        if need_n:
            sp.add_argument("--n", type=_positive, required=True, help="number of nodes")
        sp.add_argument("--w", type=_positive, required=True, help="neighbourhood radius")
        sp.add_argument("--tau", type=_tau, required=True, help="threshold as an exact fraction, e.g. 19/50")

    s = sub.add_parser("simulate", help="run one process and write its trace")
    model_flags(s)
    s.add_argument("--model", choices=[m.value for m in Model], default="standard")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--stop", type=_stop, default=None, help="seg, term, max:<k>, comma separated")
    s.add_argument("--out", type=Path, required=True, help="trace CSV path")
    s.add_argument("--initial-out", type=Path, help="initial snapshot (default <out>.initial.txt)")
    s.add_argument("--final-out", type=Path, help="final snapshot (default <out>.final.txt)")

    a = sub.add_parser("analyze", help="metrics of a snapshot file")
    a.add_argument("snapshot", type=Path)
    a.add_argument("--tau", type=_tau, help="also report unhappy and stable counts")
    a.add_argument("--samples", type=_positive, help="sample this many nodes instead of enumerating")
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--out", type=Path, help="metrics CSV path")

    k = sub.add_parser("kappa", help="solve for kappa")
    k.add_argument("--tol", type=float, default=1e-12)

    r = sub.add_parser("ratio", help="stable versus unhappy tail probabilities")
    model_flags(r, need_n=False)

    g = sub.add_parser("regime", help="which threshold regime tau falls in")
    model_flags(g, need_n=False)

    e = sub.add_parser("experiment", help="replicated runs from a spec file, or a named suite")
    src = e.add_mutually_exclusive_group(required=True)
    src.add_argument("--spec", type=Path)
    src.add_argument("--suite", choices=SUITE_NAMES)
    e.add_argument("--n", type=_positive)
    e.add_argument("--w", type=_positive, action="append", help="repeat for several w")
    e.add_argument("--tau", type=_tau)
    e.add_argument("--replicas", type=_positive)
    e.add_argument("--samples", type=_positive, help="Monte Carlo samples (mc suite)")
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--threads", type=_positive)
    e.add_argument("--out", type=Path, help="results CSV path")

    d = sub.add_parser("render", help="SVG diagram of a trace")
    d.add_argument("trace", type=Path)
    d.add_argument("--initial", type=Path, help="initial snapshot (default <trace>.initial.txt)")
    d.add_argument("--tau", type=_tau, required=True)
    d.add_argument("--model", choices=[m.value for m in Model], default="standard")
    d.add_argument("--out", type=Path, required=True)
    d.add_argument("--size", type=_positive, default=800)
    d.add_argument("--time-scale", choices=TIME_SCALES, default="rank")
    d.add_argument("--max-arcs", type=_positive, default=4096)

    m = sub.add_parser("wormald", help="coupled cycle process against its ODE")
    model_flags(m)
    m.add_argument("--L", type=_positive, required=True, help="cycle length")
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--horizon", type=float, default=0.5)
    m.add_argument("--dt", type=float, default=1e-3)
    m.add_argument("--snapshots", type=_positive, default=50)
    m.add_argument("--out", type=Path, help="ODE trajectory CSV")
    m.add_argument("--census-out", type=Path, help="simulated census CSV")
    return p


def parse_args(argv=None) -> ParsedCommand:
    args = build_parser().parse_args(argv)
    return ParsedCommand(Command(args.command), args)


def _sidecar(path: Path, suffix: str) -> Path:
    return path.with_name(path.stem + suffix)


def _simulate(a, out) -> int:
    from . import metrics
    from .dynamics import StopCondition, init_random, validate_stop

    params = ModelParams(a.n, a.w, a.tau, Model(a.model))
    stop = a.stop or StopCondition.default_for(params)
    validate_stop(params, stop)
    state = init_random(params, a.seed)
    initial = state.config
    trace = state.run(stop)
    final = state.config
    trace.write_csv(a.out)
    init_path = a.initial_out or _sidecar(a.out, ".initial.txt")
    final_path = a.final_out or _sidecar(a.out, ".final.txt")
    write_snapshot(init_path, initial, a.w)
    write_snapshot(final_path, final, a.w)
    rl = metrics.runs(final)
    emit(out, command="simulate", n=a.n, w=a.w, tau=a.tau, model=a.model, seed=a.seed,
         stop=trace.stop_reason, stages=trace.stages, events=len(trace), runs=len(rl),
         segregated=int(len(rl) <= 2), trace=a.out, initial=init_path, final=final_path)
    return EXIT_OK


def analysis_rows(config, w, tau=None, samples=None, seed=0):
    from . import metrics

    rows = metrics.metrics_rows(config, w, samples, seed)
    if tau is not None:
        counts = same_type_counts(config, w)
        rows.append(("state", "unhappy", int(np.count_nonzero(counts < happiness_threshold(tau, w)))))
        rows.append(("state", "stable_nodes", int(metrics.stable_nodes(config, w, tau).sum())))
    return rows


def _analyze(a, out) -> int:
    from . import metrics

    config, w = read_snapshot(a.snapshot)
    rows = analysis_rows(config, w, a.tau, a.samples, a.seed)
    for m, k, v in rows:
        print(f"{m}.{k}={_fmt(v)}", file=out)
    if a.out:
        a.out.write_text(metrics.format_metrics_csv(rows))
    return EXIT_OK


def _ratio(a, out) -> int:
    pairs = dict(w=a.w, tau=a.tau, log_p_stab=theory.p_stab(a.w, a.tau), log_p_unhap=theory.p_unhap(a.w, a.tau),
                 log_ratio=theory.ratio_exact(a.w, a.tau))
    if Fraction(1, 4) < a.tau < Fraction(1, 2):
        pairs["log_ratio_asymptotic"] = theory.ratio_asymptotic(a.w, a.tau)
    if a.tau < Fraction(1, 2):
        pairs["d"] = theory.d_const(a.tau)
        pairs["hoeffding_high_bias"] = theory.hoeffding_high_bias(a.w, a.tau)
    emit(out, **pairs)
    return EXIT_OK


def _regime(a, out) -> int:
    rep = theory.classify_regime(a.tau, a.w)
    emit(out, tau=rep.tau, w=rep.w, regime=rep.regime, kappa=rep.kappa_value)
    if rep.notes:
        emit(out, notes=rep.notes.replace(" ", "_"))
    return EXIT_OK


def _experiment(a, out) -> int:
    from . import experiments

    if a.spec:
        spec = experiments.ExperimentSpec.load(a.spec)
        if a.out:
            spec.output = a.out
        result = experiments.replicate(spec, threads=a.threads)
        for cell, metric, value in result.rows():
            print(f"{cell}:{metric}={_fmt(value)}", file=out)
        for c in result.checks:
            print(c.line(), file=out)
        emit(out, ok=int(result.ok))
        return EXIT_OK if result.ok else EXIT_CHECK
    fn = experiments.SUITES[a.suite]
    accepted = inspect.signature(fn).parameters
    kwargs = {}
    if a.w:
        if "ws" in accepted:
            kwargs["ws"] = tuple(a.w)
        elif len(a.w) == 1:
            kwargs["w"] = a.w[0]
        else:
            raise ValueError(f"suite {a.suite} takes a single --w")
    for flag, name in (("n", "n"), ("tau", "tau"), ("replicas", "replicas"), ("samples", "samples"),
                       ("threads", "threads")):
        v = getattr(a, flag)
        if v is not None:
            if name not in accepted:
                raise ValueError(f"suite {a.suite} does not take --{flag}")
            kwargs[name] = v
    kwargs["seed" if "seed" in accepted else "seed_base"] = a.seed
    report = fn(**kwargs)
    for cell, metric, value in report.rows:
        print(f"{cell}:{metric}={_fmt(value)}", file=out)
    for line in report.lines():
        print(line, file=out)
    emit(out, ok=int(report.ok))
    if a.out:
        a.out.write_text(report.to_csv())
    return EXIT_OK if report.ok else EXIT_CHECK


def _render(a, out) -> int:
    from . import render
    from .dynamics import Trace

    init_path = a.initial or _sidecar(a.trace, ".initial.txt")
    config, w = read_snapshot(init_path)
    trace = Trace.read_csv(a.trace, config)
    params = ModelParams(config.n, w, a.tau, Model(a.model))
    opts = render.RenderOptions(size=a.size, time_scale=render.TimeScale(a.time_scale), max_arcs=a.max_arcs)
    render.write_svg(a.out, trace, params, opts)
    emit(out, svg=a.out, n=config.n, events=len(trace))
    return EXIT_OK


def _wormald(a, out) -> int:
    from . import wormald

    p = wormald.MultiCycleParams(a.n, a.L, a.w, a.tau)
    system = wormald.build_ode(p)
    zeta0, trace, state = wormald.simulate_census(p, a.seed, a.horizon, a.snapshots)
    traj = wormald.integrate(zeta0 / a.n, a.horizon, a.dt, system)
    dev = wormald.compare_trajectories(trace, traj)
    emit(out, n=a.n, L=a.L, w=a.w, tau=a.tau, seed=a.seed, horizon=a.horizon, dt=a.dt,
         deviation=dev, sum_drift=traj.max_drift, min_z=traj.min_value,
         taint_fraction=state.taint_size / a.n, max_taint_increment=int(trace.increments.max(initial=0)),
         delta_final=wormald.delta_functional(traj.z[-1], system))
    if a.out:
        stages = np.rint(traj.x * a.n).astype(np.int64)
        wormald.write_trajectory_csv(a.out, stages, traj.z, a.L)
    if a.census_out:
        xs = np.concatenate(([0], trace.stages))
        zs = np.vstack((zeta0[None, :], trace.census))
        wormald.write_trajectory_csv(a.census_out, xs, zs, a.L, integer=True)
    return EXIT_OK


HANDLERS = {
    Command.SIMULATE: _simulate,
    Command.ANALYZE: _analyze,
    Command.KAPPA: lambda a, out: (emit(out, kappa=theory.kappa(a.tol), tol=a.tol), EXIT_OK)[1],
    Command.RATIO: _ratio,
    Command.REGIME: _regime,
    Command.EXPERIMENT: _experiment,
    Command.RENDER: _render,
    Command.WORMALD: _wormald,
}


def dispatch(cmd: ParsedCommand, out=None) -> int:
    out = out or sys.stdout
    try:
        return HANDLERS[cmd.command](cmd.args, out)
    except OSError as exc:
        where = getattr(exc, "filename", None)
        print(f"error: {where + ': ' if where else ''}{exc.strerror or exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def main(argv=None) -> int:
    return dispatch(parse_args(argv))


if __name__ == "__main__":
    sys.exit(main())
