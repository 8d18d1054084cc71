import math
from fractions import Fraction

import numpy as np
import pytest

from schelling_ring import metrics, theory
from schelling_ring.dynamics import StopCondition, init_random
from schelling_ring.experiments import (
    Cell,
    Check,
    CheckSpec,
    ExperimentSpec,
    aggregate,
    bk_suite,
    half_width,
    mc_initial_stats,
    replicate,
    run_replica,
    tail_ratio_max,
    thm1_suite,
    thm3_suite,
    thm5_suite,
    thread_count,
)
from schelling_ring.ring import Model

SPEC = """\
# a small grid
n=2000
w=4
w=6
tau=2/5
model=standard
model=simple
replicas=3
seed=10
sample_nodes=500
check=touched<=1
"""


def test_spec_parse():
    spec = ExperimentSpec.parse(SPEC)
    assert spec.n == [2000] and spec.w == [4, 6] and spec.tau == [Fraction(2, 5)]
    assert spec.model == [Model.STANDARD, Model.SIMPLE]
    assert spec.replicas == 3 and spec.seed_base == 10 and spec.sample_nodes == 500
    assert spec.checks == [CheckSpec("touched", "<=", 1.0)]
    assert len(spec.cells()) == 4
    assert spec.stop is None and spec.output is None


def test_spec_parse_errors():
    with pytest.raises(ValueError, match="missing"):
        ExperimentSpec.parse("n=100\nw=2\n")
    with pytest.raises(ValueError, match="unknown"):
        ExperimentSpec.parse("n=100\nw=2\ntau=2/5\ncolour=red\n")
    with pytest.raises(ValueError):
        ExperimentSpec.parse("n=100\nw=2\ntau=0.4\n")
    with pytest.raises(ValueError):
        ExperimentSpec.parse("n=100\nw=2\ntau=2/5\nreplicas=0\n")
    with pytest.raises(ValueError):
        ExperimentSpec.parse("n=100\nw=2\ntau=2/5\nseed=1\nseed=2\n")
    with pytest.raises(ValueError):
        CheckSpec.parse("touched ~ 3")


def test_spec_load_resolves_output(tmp_path):
    (tmp_path / "s.txt").write_text("n=500\nw=2\ntau=2/5\noutput=out.csv\nstop=term,max:100\n")
    spec = ExperimentSpec.load(tmp_path / "s.txt")
    assert spec.output == tmp_path / "out.csv"
    assert spec.stop == StopCondition(100, False, True)


def test_single_replica_equals_direct_run():
    cell = Cell(3000, 5, Fraction(2, 5), Model.STANDARD)
    rep = run_replica(cell, 7, None, 3000, full_nodes=True)
    state = init_random(cell.params(), 7)
    trace = state.run()
    assert rep.events == len(trace) and rep.stages == trace.stages
    assert np.array_equal(np.sort(rep.lengths), np.sort(metrics.run_lengths_by_node(state.config)))
    agg = aggregate([rep])
    direct = metrics.summarize_lengths(metrics.run_lengths_by_node(state.config))
    assert agg["runlen_q50"] == direct["q50"] and agg["runlen_mean"] == direct["mean"]
    assert agg["segregated"] == float(metrics.is_completely_segregated(state.config))


def test_replicate_is_deterministic(tmp_path):
    outs = []
    for k in range(2):
        path = tmp_path / f"r{k}.csv"
        spec = ExperimentSpec.parse(SPEC + f"output={path}\n")
        replicate(spec, threads=1)
        outs.append(path.read_bytes())
    assert outs[0] == outs[1]
    threaded = replicate(ExperimentSpec.parse(SPEC), threads=3)
    assert threaded.to_csv().encode() == outs[0]


def test_result_fractions_and_quantiles():
    result = replicate(ExperimentSpec.parse(SPEC), threads=1)
    assert result.ok and not result.partial
    for _, agg in result.cells:
        for key in ("touched", "changed", "segregated", "monochrome", "terminated"):
            assert 0 <= agg[key] <= 1
        qs = [agg[f"runlen_{q}"] for q in ("min", "q10", "q25", "q50", "q75", "q90", "max")]
        assert qs == sorted(qs)
        assert agg["touched_n"] == 3 * 500


def test_failing_check_and_partial_results():
    spec = ExperimentSpec.parse("n=500\nw=2\ntau=2/5\ncheck=touched>1\n")
    assert not replicate(spec, threads=1).ok
    spec = ExperimentSpec.parse("n=500\nw=2\ntau=2/5\nreplicas=3\ntime_budget=1e-9\n")
    result = replicate(spec, threads=1)
    assert result.partial and not result.ok
    assert ("all", "partial", 1.0) in result.rows()


def test_half_width_scaling():
    assert half_width(0.5, 100) == pytest.approx(0.15)
    assert half_width(0.3, 50) / half_width(0.3, 100) == pytest.approx(math.sqrt(2))
    assert half_width(0.3, 0) == math.inf


def test_standard_error_shrinks_with_replicas():
    # empirical spread of a success rate over independent batches
    spec = "n=400\nw=3\ntau=3/5\nstop=seg,max:2000\nreplicas={r}\nseed={s}\n"
    rates = {r: [replicate(ExperimentSpec.parse(spec.format(r=r, s=1000 * b)), threads=1).cells[0][1]["segregated"]
                 for b in range(12)] for r in (10, 20)}
    p = np.mean(rates[10] + rates[20])
    assert 0.05 < p < 0.95
    assert np.std(rates[20]) < np.std(rates[10])


def test_thread_count_env(monkeypatch):
    monkeypatch.setenv("SCHELLING_THREADS", "3")
    assert thread_count() == 3
    monkeypatch.setenv("SCHELLING_THREADS", "0")
    with pytest.raises(ValueError):
        thread_count()


def test_check_line():
    c = Check("x", 0.5, "<", 1.0, "PAPER")
    assert c.passed and c.line() == "check=x value=0.5 < 1 [PAPER] PASS"
    assert not Check("x", 2.0, "<", 1.0).passed


def test_suites_guard_regimes():
    with pytest.raises(ValueError, match="regime"):
        thm1_suite(ws=(10,), n=1000, tau="19/50", replicas=1)
    with pytest.raises(ValueError, match="regime"):
        thm3_suite(ws=(10,), n=1000, tau="3/10", replicas=1)
    with pytest.raises(ValueError, match="regime"):
        bk_suite(ws=(10,), tau="2/5", replicas=1)
    with pytest.raises(ValueError, match="regime"):
        thm5_suite(n=1000, w=25, tau="26/51", replicas=1)


def test_small_suites_run():
    r1 = thm1_suite(ws=(5, 10), n=5000, replicas=2, threads=1)
    assert [c.name for c in r1.checks] == ["touched[w=10]", "touched_decreasing", "median_growth"]
    assert 0 <= r1.value("n=5000;w=10;tau=3/10;model=standard", "touched") <= 1
    r3 = thm3_suite(ws=(5, 10), n=5000, replicas=2, threads=1)
    assert any(c.name.startswith("median_ratio") for c in r3.checks)
    rb = bk_suite(ws=(4, 8), n_per_w=500, replicas=2, threads=1)
    assert rb.value("n=4000;w=8;tau=1/2;model=standard", "median_over_w2") > 0
    assert all(c.value < 1 for c in rb.checks if c.name.startswith("tail_ratio"))


def test_tail_ratio_max():
    assert tail_ratio_max([0.5, 0.25, 0.0, 0.0]) == 0.5
    assert tail_ratio_max([0.0, 0.0]) == 0.0
    assert tail_ratio_max([0.0, 0.1]) == math.inf
    r5 = thm5_suite(n=400, w=4, replicas=3, probe=100, threads=1)
    assert {c.name for c in r5.checks} == {"standard_segregated", "probes_hold", "simple_monochrome"}
    assert r5.value("n=400;w=4;tau=3/5;model=simple", "reached") == 1.0


def test_mc_initial_stats():
    report = mc_initial_stats(w=20, tau="2/5", samples=100_000, seed=0)
    assert report.ok, report.lines()
    assert report.value("mc", "p_stab_samples") == 100_000
    assert report.value("mc", "p_unhap_exact") == pytest.approx(math.exp(theory.p_unhap(20, Fraction(2, 5))))
    with pytest.raises(ValueError):
        mc_initial_stats(samples=10)
