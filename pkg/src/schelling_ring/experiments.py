"""Replicated runs and the regime-by-regime check suites.

Every suite is a deterministic function of its arguments and ``seed_base``:
replica i of every cell uses seed ``seed_base + i``, and aggregation happens
in replica order whatever the thread schedule.
"""

from __future__ import annotations

import itertools
import math
import operator
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import metrics, theory
from .dynamics import EngineState, StopCondition, StopReason, init_random, random_config
from .ring import Model, ModelParams, parse_tau, window_alpha_counts
from .rng import SplitMix64, random_bits

DEFAULT_SAMPLES = 10_000
SAMPLE_SALT = 0x243F6A8885A308D3


def thread_count() -> int:
    env = os.environ.get("SCHELLING_THREADS", "").strip()
    if env:
        k = int(env)
        if k < 1:
            raise ValueError("SCHELLING_THREADS must be >= 1")
        return k
    return os.cpu_count() or 1


def half_width(p: float, count: int) -> float:
    """Binomial 3-sigma half-width."""
    if count <= 0:
        return math.inf
    return 3.0 * math.sqrt(max(p * (1 - p), 0.0) / count)


# --- checks -------------------------------------------------------------------

OPS = {
    ">=": operator.ge,
    "<=": operator.le,
    ">": operator.gt,
    "<": operator.lt,
    "==": operator.eq,
}


@dataclass(frozen=True)
class Check:
    name: str
    value: float
    op: str
    threshold: float
    label: str = "DERIVED"

    @property
    def passed(self) -> bool:
        return bool(OPS[self.op](self.value, self.threshold))

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return f"check={self.name} value={self.value:.6g} {self.op} {self.threshold:.6g} [{self.label}] {verdict}"


@dataclass(frozen=True)
class CheckSpec:
    metric: str
    op: str
    threshold: float

    @classmethod
    def parse(cls, text: str) -> "CheckSpec":
        for op in (">=", "<=", "==", ">", "<"):
            if op in text:
                metric, _, thr = text.partition(op)
                return cls(metric.strip(), op, float(thr))
        raise ValueError(f"check needs one of {list(OPS)}: {text!r}")


# --- spec and replication -----------------------------------------------------


@dataclass(frozen=True)
class Cell:
    n: int
    w: int
    tau: Fraction
    model: Model

    @property
    def label(self) -> str:
        return f"n={self.n};w={self.w};tau={self.tau};model={self.model.value}"

    def params(self) -> ModelParams:
        return ModelParams(self.n, self.w, self.tau, self.model)


@dataclass
class ExperimentSpec:
    n: list[int]
    w: list[int]
    tau: list[Fraction]
    model: list[Model] = field(default_factory=lambda: [Model.STANDARD])
    replicas: int = 1
    seed_base: int = 0
    sample_nodes: int = DEFAULT_SAMPLES
    full_nodes: bool = False
    stop: StopCondition | None = None
    output: Path | None = None
    checks: list[CheckSpec] = field(default_factory=list)
    time_budget: float | None = None

    def __post_init__(self):
        if self.replicas < 1:
            raise ValueError("replicas must be >= 1")
        if not (self.n and self.w and self.tau and self.model):
            raise ValueError("every grid axis needs at least one value")
        if self.sample_nodes < 1:
            raise ValueError("sample_nodes must be >= 1")

    def cells(self) -> list[Cell]:
        return [Cell(n, w, t, m) for n, w, t, m in itertools.product(self.n, self.w, self.tau, self.model)]

    @classmethod
    def parse(cls, text: str, base: Path | None = None) -> "ExperimentSpec":
        grid: dict[str, list[str]] = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ValueError(f"line {lineno}: expected key=value, got {raw!r}")
            grid.setdefault(key.strip(), []).append(value.strip())

        def one(key, default=None):
            vals = grid.pop(key, None)
            if vals is None:
                return default
            if len(vals) > 1:
                raise ValueError(f"{key} given {len(vals)} times")
            return vals[0]

        for key in ("n", "w", "tau"):
            if key not in grid:
                raise ValueError(f"spec is missing {key}=")
        spec = dict(
            n=[int(v) for v in grid.pop("n")],
            w=[int(v) for v in grid.pop("w")],
            tau=[parse_tau(v) for v in grid.pop("tau")],
            model=[Model(v.lower()) for v in grid.pop("model", ["standard"])],
            checks=[CheckSpec.parse(v) for v in grid.pop("check", [])],
            replicas=int(one("replicas", 1)),
            seed_base=int(one("seed", 0)),
            sample_nodes=int(one("sample_nodes", DEFAULT_SAMPLES)),
            full_nodes=one("full_nodes", "false").lower() in ("1", "true", "yes"),
        )
        stop = one("stop")
        spec["stop"] = StopCondition.parse(stop) if stop else None
        out = one("output")
        if out:
            spec["output"] = (base / out) if base and not Path(out).is_absolute() else Path(out)
        budget = one("time_budget")
        spec["time_budget"] = float(budget) if budget else None
        if grid:
            raise ValueError(f"unknown spec keys: {sorted(grid)}")
        return cls(**spec)

    @classmethod
    def load(cls, path) -> "ExperimentSpec":
        path = Path(path)
        return cls.parse(path.read_text(), base=path.parent)


@dataclass
class ReplicaResult:
    seed: int
    stop: StopReason
    stages: int
    events: int
    changed_fraction: float
    touched: int
    touched_count: int
    lengths: np.ndarray
    segregated: bool
    monochrome: bool


def _node_sample(n: int, seed: int, count: int) -> np.ndarray:
    return SplitMix64(seed ^ SAMPLE_SALT).integers(n, count)


def run_replica(cell: Cell, seed: int, stop: StopCondition | None, sample_nodes: int,
                full_nodes: bool = False) -> ReplicaResult:
    params = cell.params()
    state = init_random(params, seed)
    trace = state.run(stop or StopCondition.default_for(params))
    return summarize_replica(state, trace, seed, sample_nodes, full_nodes)


def summarize_replica(state: EngineState, trace, seed: int, sample_nodes: int,
                      full_nodes: bool = False) -> ReplicaResult:
    params = state.params
    n, w = params.n, params.w
    final = state.config
    changed = np.zeros(n, dtype=np.int8)
    changed[trace.node] = 1
    near = window_alpha_counts(changed, w) > 0
    lengths = metrics.run_lengths_by_node(final)
    if full_nodes:
        nodes = np.arange(n)
    else:
        nodes = _node_sample(n, seed, sample_nodes)
    rl = metrics.runs(final)
    alpha = final.alpha_count()
    return ReplicaResult(
        seed=seed,
        stop=trace.stop_reason,
        stages=trace.stages,
        events=len(trace),
        changed_fraction=float(changed.mean()),
        touched=int(near[nodes].sum()),
        touched_count=int(nodes.size),
        lengths=lengths[nodes],
        segregated=len(rl) <= 2,
        monochrome=alpha in (0, n),
    )


def aggregate(reps: list[ReplicaResult]) -> dict[str, float]:
    pooled = np.concatenate([r.lengths for r in reps])
    out = {"replicas": float(len(reps))}
    for k, v in metrics.summarize_lengths(pooled).items():
        out[f"runlen_{k}"] = v
    out["runlen_median_of_medians"] = float(np.median([np.median(r.lengths) for r in reps]))
    t = sum(r.touched for r in reps)
    tn = sum(r.touched_count for r in reps)
    out["touched"] = t / tn
    out["touched_n"] = float(tn)
    out["touched_hw"] = half_width(t / tn, tn)
    out["changed"] = float(np.mean([r.changed_fraction for r in reps]))
    seg = float(np.mean([r.segregated for r in reps]))
    out["segregated"] = seg
    out["segregated_hw"] = half_width(seg, len(reps))
    out["monochrome"] = float(np.mean([r.monochrome for r in reps]))
    out["terminated"] = float(np.mean([r.stop is StopReason.TERMINATED for r in reps]))
    out["stages_mean"] = float(np.mean([r.stages for r in reps]))
    out["events_mean"] = float(np.mean([r.events for r in reps]))
    return out


@dataclass
class ExperimentResult:
    cells: list[tuple[Cell, dict[str, float]]]
    replicas: dict[Cell, list[ReplicaResult]]
    partial: bool = False
    checks: list[Check] = field(default_factory=list)

    def rows(self) -> list[tuple[str, str, float]]:
        rows = [(c.label, k, v) for c, agg in self.cells for k, v in agg.items()]
        if self.partial:
            rows.append(("all", "partial", 1.0))
        return rows

    def to_csv(self) -> str:
        return format_rows_csv(self.rows())

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)


def format_rows_csv(rows) -> str:
    lines = ["cell,metric,value"]
    for cell, metric, value in rows:
        if isinstance(value, float) and value.is_integer():
            value = int(value)
        elif isinstance(value, float):
            value = repr(value)
        lines.append(f"{cell},{metric},{value}")
    return "\n".join(lines) + "\n"


def _run_replicas(cell: Cell, seeds: list[int], stop, sample_nodes, full_nodes, threads,
                  deadline: float | None) -> tuple[list[ReplicaResult], bool]:
    def job(seed):
        if deadline is not None and time.monotonic() > deadline:
            return None
        return run_replica(cell, seed, stop, sample_nodes, full_nodes)

    if threads > 1 and len(seeds) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(job, seeds))
    else:
        results = [job(s) for s in seeds]
    done = [r for r in results if r is not None]
    return done, len(done) < len(seeds)


def replicate(spec: ExperimentSpec, threads: int | None = None) -> ExperimentResult:
    threads = threads or thread_count()
    deadline = time.monotonic() + spec.time_budget if spec.time_budget else None
    seeds = [spec.seed_base + i for i in range(spec.replicas)]
    cells, reps, partial = [], {}, False
    for cell in spec.cells():
        done, cut = _run_replicas(cell, seeds, spec.stop, spec.sample_nodes, spec.full_nodes,
                                  threads, deadline)
        partial |= cut
        if not done:
            continue
        reps[cell] = done
        cells.append((cell, aggregate(done)))
    result = ExperimentResult(cells, reps, partial)
    for cs in spec.checks:
        for cell, agg in cells:
            if cs.metric not in agg:
                raise ValueError(f"unknown metric in check: {cs.metric!r}")
            result.checks.append(Check(f"{cell.label}:{cs.metric}", agg[cs.metric], cs.op, cs.threshold))
    if partial:
        result.checks.append(Check("complete", 0.0, "==", 1.0))
    if spec.output:
        Path(spec.output).write_text(result.to_csv())
    return result


# --- suites -------------------------------------------------------------------


@dataclass
class SuiteReport:
    name: str
    rows: list[tuple[str, str, float]] = field(default_factory=list)
    checks: list[Check] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    def value(self, cell: str, metric: str) -> float:
        for c, m, v in self.rows:
            if c == cell and m == metric:
                return v
        raise KeyError((cell, metric))

    def to_csv(self) -> str:
        return format_rows_csv(self.rows)

    def lines(self) -> list[str]:
        return [f"suite={self.name}"] + [c.line() for c in self.checks]


def _guard(tau: Fraction, w: int, allowed: set, what: str):
    report = theory.classify_regime(tau, w)
    if report.regime not in allowed:
        names = ", ".join(sorted(r.value for r in allowed))
        raise ValueError(f"{what} needs regime {names}; tau={tau}, w={w} is {report.regime.value} "
                         f"(kappa={report.kappa_value:.9f})")


def _cell_rows(report: SuiteReport, cell: Cell, agg: dict[str, float]):
    report.rows.extend((cell.label, k, v) for k, v in agg.items())


def _run_cell(cell, replicas, seed_base, threads, sample_nodes=DEFAULT_SAMPLES, full_nodes=False, stop=None):
    seeds = [seed_base + i for i in range(replicas)]
    reps, _ = _run_replicas(cell, seeds, stop, sample_nodes, full_nodes, threads or thread_count(), None)
    return reps, aggregate(reps)


def thm1_suite(ws=(30, 60), n: int = 100_000, tau="3/10", replicas: int = 10, seed_base: int = 0,
               threads: int | None = None, touched_max: float = 0.1) -> SuiteReport:
    """Below kappa almost nothing moves, and less so as w grows."""
    tau = parse_tau(tau)
    ws = sorted(ws)
    for w in ws:
        _guard(tau, w, {theory.Regime.BELOW_KAPPA}, "thm1 suite")
    report = SuiteReport("thm1")
    touched, medians = [], []
    for w in ws:
        cell = Cell(n, w, tau, Model.STANDARD)
        _, agg = _run_cell(cell, replicas, seed_base, threads)
        _cell_rows(report, cell, agg)
        touched.append(agg["touched"])
        medians.append(agg["runlen_q50"])
    report.checks.append(Check(f"touched[w={ws[-1]}]", touched[-1], "<", touched_max))
    if len(ws) > 1:
        report.checks.append(Check("touched_decreasing", float(all(b < a for a, b in zip(touched, touched[1:]))),
                                   "==", 1.0, "PAPER"))
        report.checks.append(Check("median_growth", medians[-1] / medians[0], "<=", 2.0, "PAPER"))
    return report


def thm3_suite(ws=(30, 60), n: int = 100_000, tau="19/50", replicas: int = 10, seed_base: int = 0,
               threads: int | None = None, in_long_min: float = 0.9) -> SuiteReport:
    """Between kappa and 1/2 a typical node ends in a run of length e^{w/d} or more."""
    tau = parse_tau(tau)
    ws = sorted(ws)
    for w in ws:
        _guard(tau, w, {theory.Regime.KAPPA_TO_HALF}, "thm3 suite")
    d = theory.d_const(tau)
    report = SuiteReport("thm3")
    medians = []
    for w in ws:
        cell = Cell(n, w, tau, Model.STANDARD)
        reps, agg = _run_cell(cell, replicas, seed_base, threads)
        bound = math.exp(w / d)
        pooled = np.concatenate([r.lengths for r in reps])
        frac = float(np.mean(pooled >= bound))
        agg["long_bound"] = bound
        agg["in_long"] = frac
        agg["in_long_hw"] = half_width(frac, pooled.size)
        _cell_rows(report, cell, agg)
        medians.append(agg["runlen_q50"])
        report.checks.append(Check(f"in_long[w={w}]", frac, ">", in_long_min))
    for (w0, m0), (w1, m1) in zip(zip(ws, medians), zip(ws[1:], medians[1:])):
        if w1 == 2 * w0:
            report.checks.append(Check(f"median_ratio[w={w0}->{w1}]", m1 / m0, ">", 2.0, "PAPER"))
    return report


BK_LAMBDAS = (1, 2, 3, 4)


def bk_tails(lengths: np.ndarray, w: int, lambdas=BK_LAMBDAS) -> list[float]:
    return [float(np.mean(lengths > lam * w * w)) for lam in lambdas]


def tail_ratio_max(tails) -> float:
    """Largest successive ratio of a tail sequence.

    A zero tail followed by a zero tail is treated as decay (ratio 0); a
    positive tail after a zero one is an increase (inf).
    """
    worst = 0.0
    for a, b in zip(tails, tails[1:]):
        if a > 0:
            worst = max(worst, b / a)
        elif b > 0:
            return math.inf
    return worst


def bk_suite(ws=(20, 40, 80), n_per_w: int = 2000, n_min: int = 0, replicas: int = 5, tau="1/2",
             seed_base: int = 0, threads: int | None = None, band: float = 4.0) -> SuiteReport:
    """At tau = 1/2 run lengths scale like w^2 with geometric tails."""
    tau = parse_tau(tau)
    ws = sorted(ws)
    for w in ws:
        _guard(tau, w, {theory.Regime.AT_HALF_EQUIV}, "bk suite")
    report = SuiteReport("bk")
    scaled = []
    for w in ws:
        n = max(n_min, n_per_w * w)
        cell = Cell(n, w, tau, Model.STANDARD)
        reps, agg = _run_cell(cell, replicas, seed_base, threads, full_nodes=True)
        pooled = np.concatenate([r.lengths for r in reps])
        agg["median_over_w2"] = agg["runlen_q50"] / (w * w)
        agg["median_over_w"] = agg["runlen_q50"] / w
        tails = bk_tails(pooled, w)
        for lam, p in zip(BK_LAMBDAS, tails):
            agg[f"tail_{lam}"] = p
        _cell_rows(report, cell, agg)
        scaled.append(agg["median_over_w2"])
        report.checks.append(Check(f"tail_ratio_max[w={w}]", tail_ratio_max(tails), "<", 1.0, "PAPER"))
    report.checks.append(Check("median_w2_band", max(scaled) / min(scaled), "<=", band, "PAPER"))
    return report


@dataclass
class SegregationRun:
    seed: int
    reached: bool
    stages: int
    events: int
    probe_ok: bool | None


def _probe(state: EngineState, stages: int) -> bool:
    for _ in range(stages):
        out = state.step()
        if state.boundaries > 2:
            return False
        if out.kind.name in ("NO_UNHAPPY_PAIR", "NO_UNHAPPY"):
            break
    return True


def _segregation_run(params: ModelParams, seed: int, cap: int, probe: int) -> SegregationRun:
    """Standard: run to complete segregation; simple: run to a single type."""
    state = init_random(params, seed)
    if params.model is Model.STANDARD:
        trace = state.run(StopCondition(max_stages=cap, stop_on_segregation=True))
        seg = trace.stop_reason is StopReason.SEGREGATED
        ok = _probe(state, probe) if seg and probe else None
        return SegregationRun(seed, seg, trace.stages, len(trace), ok)
    trace = state.run(StopCondition(max_stages=cap, stop_on_segregation=False))
    mono = state.config.alpha_count() in (0, params.n)
    return SegregationRun(seed, mono, trace.stages, len(trace), None)


def thm5_suite(n: int = 5000, w: int = 10, tau="3/5", replicas: int = 50, seed_base: int = 0,
               budget_factor: int = 50, cap_factor: int = 4, simple_cap_factor: int = 2000,
               probe: int = 1000, threads: int | None = None, success_min: float = 0.95) -> SuiteReport:
    """Above the equivalence band, segregation (standard) and monochrome (simple).

    The standard model is judged against an attempt budget of
    ``budget_factor * n * (2w+1)`` stages, blocked draws included.  Runs are
    continued to ``cap_factor`` budgets so the swap-count reading of the
    budget can be reported alongside.  The simple model has no budget; it runs
    until one type remains, capped at ``simple_cap_factor`` budgets.
    """
    tau = parse_tau(tau)
    _guard(tau, w, {theory.Regime.ABOVE_HALF}, "thm5 suite")
    unit = n * (2 * w + 1)
    budget = budget_factor * unit
    report = SuiteReport("thm5")
    threads = threads or thread_count()
    seeds = [seed_base + i for i in range(replicas)]
    for model in (Model.STANDARD, Model.SIMPLE):
        params = ModelParams(n, w, tau, model)
        cap = (cap_factor if model is Model.STANDARD else simple_cap_factor) * budget
        job = lambda s: _segregation_run(params, s, cap, probe)  # noqa: E731
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                runs = list(pool.map(job, seeds))
        else:
            runs = [job(s) for s in seeds]
        label = Cell(n, w, tau, model).label
        stages = np.array([r.stages for r in runs], dtype=np.float64)
        events = np.array([r.events for r in runs], dtype=np.float64)
        reached = np.array([r.reached for r in runs])
        report.rows += [
            (label, "budget", float(budget)),
            (label, "cap", float(cap)),
            (label, "reached", float(reached.mean())),
            (label, "stages_q50", float(np.median(stages))),
            (label, "stages_max", float(stages.max())),
            (label, "events_q50", float(np.median(events))),
            (label, "events_max", float(events.max())),
        ]
        if model is Model.STANDARD:
            in_budget = float(np.mean(reached & (stages <= budget)))
            by_swaps = float(np.mean(reached & (events / 2 <= budget)))
            report.rows += [
                (label, "success", in_budget),
                (label, "success_hw", half_width(in_budget, len(runs))),
                (label, "success_swap_budget", by_swaps),
            ]
            report.checks.append(Check("standard_segregated", in_budget, ">=", success_min))
            probes = [r.probe_ok for r in runs if r.probe_ok is not None]
            report.rows.append((label, "probes", float(len(probes))))
            report.checks.append(Check("probes_hold", float(bool(probes) and all(probes)), "==", 1.0, "PAPER"))
        else:
            report.checks.append(Check("simple_monochrome", float(reached.mean()), "==", 1.0, "PAPER"))
    return report


@dataclass(frozen=True)
class McEstimate:
    name: str
    empirical: float
    exact: float
    samples: int

    @property
    def hw(self) -> float:
        return half_width(self.exact, self.samples)

    @property
    def within(self) -> bool:
        return abs(self.empirical - self.exact) <= self.hw


def _random_rows(seed: int, rows: int, width: int) -> np.ndarray:
    return random_bits(seed, rows * width).reshape(rows, width).astype(np.int64)


def mc_initial_stats(w: int = 20, tau="2/5", samples: int = 100_000, seed: int = 0) -> SuiteReport:
    """Sampled windows against the exact tail probabilities."""
    tau = parse_tau(tau)
    if samples < 1000:
        raise ValueError("samples must be >= 1000")
    W = 2 * w + 1
    T = ModelParams(2 * W + 1, w, tau).threshold
    est = []

    # stability of [a, a+w] for a BETA anchor at a
    win = _random_rows(seed, samples, w + 1)
    win[:, 0] = 0
    beta = (w + 1) - win.sum(axis=1)
    est.append(McEstimate("p_stab", float(np.mean(beta >= T)), math.exp(theory.p_stab(w, tau)), samples))

    # unhappiness of the centre of a fresh neighbourhood
    nb = _random_rows(seed + 1, samples, W)
    own = nb[:, w]
    same = np.where(own == 1, nb.sum(axis=1), W - nb.sum(axis=1))
    est.append(McEstimate("p_unhap", float(np.mean(same < T)), math.exp(theory.p_unhap(w, tau)), samples))

    report = SuiteReport("mc")
    if tau < Fraction(1, 2):
        nb2 = _random_rows(seed + 2, samples, W)
        theta = 2 * nb2.sum(axis=1) - W
        bound = (1 - 2 * tau) * W
        high = np.abs(theta) * bound.denominator > bound.numerator
        hb = McEstimate("high_bias", float(np.mean(high)), float(theory.high_bias_exact(w, tau)), samples)
        est.append(hb)
        hoeff = theory.hoeffding_high_bias(w, tau)
        report.rows.append(("mc", "hoeffding", hoeff))
        report.checks.append(Check("high_bias<=hoeffding", hb.empirical, "<=", hoeff, "PAPER"))
    for e in est:
        report.rows += [("mc", f"{e.name}_empirical", e.empirical), ("mc", f"{e.name}_exact", e.exact),
                        ("mc", f"{e.name}_hw", e.hw), ("mc", f"{e.name}_samples", float(e.samples))]
        report.checks.append(Check(f"{e.name}_within_3sigma", abs(e.empirical - e.exact), "<=", e.hw))
    return report


SUITES = {
    "thm1": thm1_suite,
    "thm3": thm3_suite,
    "bk": bk_suite,
    "thm5": thm5_suite,
    "mc": mc_initial_stats,
}


__all__ = [
    "Check", "CheckSpec", "Cell", "ExperimentSpec", "ExperimentResult", "ReplicaResult", "SuiteReport",
    "replicate", "run_replica", "aggregate", "thm1_suite", "thm3_suite", "bk_suite", "thm5_suite",
    "mc_initial_stats", "half_width", "thread_count", "random_config", "SUITES",
]
