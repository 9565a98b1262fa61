import math

import numpy as np
import pytest

from privagg.engine import (
    EngineAbort,
    RunConfig,
    aggregate,
    decay_envelope,
    run,
    state_envelope,
    transform_aggregate,
)
from privagg.noise import NoiseParams
from privagg.topology import ConnectivityError, TopologyEvent, build_graph, generate
from privagg.weights import contraction_factor, metropolis


def _zero_cfg(g, x0, **kw):
    return RunConfig(graph=g, x0=x0, scheme="zero", **kw)


def test_one_step_averaging_on_k2():
    trace = run(_zero_cfg(generate("complete", 2), [0.0, 2.0], max_iterations=1))
    assert np.array_equal(trace.x_final, np.array([1.0, 1.0]))
    assert trace.errs[-1] == 0.0
    assert trace.reason == "max_iterations"


def test_consensus_fixed_point():
    trace = run(_zero_cfg(generate("path", 4), np.full(4, 5.0)))
    for x in trace.xs:
        assert np.max(np.abs(x - 5.0)) <= 1e-12


def test_dual_forms_bitwise_identical():
    g = generate("random_gnp", 9, seed=2, p=0.5)
    rng = np.random.default_rng(0)
    x0 = rng.uniform(0, 100, 9)
    for seed in range(3):
        traces = [
            run(
                RunConfig(
                    graph=g,
                    x0=x0,
                    noise=NoiseParams(seed=seed),
                    scheme="zero_sum",
                    update_form=form,
                )
            )
            for form in ("matrix", "per_node")
        ]
        a, b = traces
        assert all(np.array_equal(p, q) for p, q in zip(a.xs, b.xs))
        assert all(np.array_equal(p, q) for p, q in zip(a.x_pluses, b.x_pluses))
        assert all(np.array_equal(p, q) for p, q in zip(a.thetas, b.thetas))
        assert np.array_equal(a.x_final, b.x_final)


def test_engine_matches_straightline_oracle():
    # independent re-implementation of x(k+1) = W (x(k) + theta(k)) with
    # explicit ascending-order accumulation, fed the recorded noise
    g = generate("path", 3)
    rng = np.random.default_rng(42)
    x0 = rng.uniform(0, 10, 3)
    params = NoiseParams(alpha=1.0, rho=0.9, seed=42)
    cfg = RunConfig(graph=g, x0=x0, noise=params, scheme="zero_sum", max_iterations=81)
    trace = run(cfg)
    w = metropolis(g).w.tolist()
    x = list(map(float, x0))
    for k in range(trace.k_stop):
        assert np.array_equal(np.array(x), trace.xs[k])
        xp = [x[i] + float(trace.thetas[k][i]) for i in range(3)]
        assert np.array_equal(np.array(xp), trace.x_pluses[k])
        x = [sum_ordered(w[i], xp) for i in range(3)]
    assert np.array_equal(np.array(x), trace.x_final)
    # the error at k=81 respects the geometric spread envelope plus the
    # un-cancelled residual mass (<= (alpha/2) rho^81 per node)
    eps_w = contraction_factor(metropolis(g))
    bound_81 = next(p.bound for p in decay_envelope(trace, eps_w, params) if p.k == 81)
    assert trace.final_err <= bound_81 + 0.5 * params.rho**81


def sum_ordered(row, v):
    acc = 0.0
    for wij, vj in zip(row, v):
        acc = acc + wij * vj
    return acc


def test_mass_conservation_with_noise_accounting():
    g = generate("random_gnp", 15, seed=8, p=0.4)
    rng = np.random.default_rng(8)
    x0 = rng.uniform(0, 100, 15)
    for scheme in ("zero_sum", "independent_decaying", "gaussian_constant"):
        cfg = RunConfig(graph=g, x0=x0, noise=NoiseParams(seed=1), scheme=scheme, max_iterations=150)
        trace = run(cfg)
        injected = 0.0
        for k in range(trace.k_stop):
            expected = float(x0.sum()) + injected
            got = float(trace.xs[k].sum())
            assert abs(got - expected) <= 15 * max(k, 1) * 1e-12 * max(1.0, abs(expected))
            injected += float(trace.thetas[k].sum())


def test_state_envelope_values():
    assert state_envelope([1.0, -3.0], NoiseParams(alpha=1.0, rho=0.5)) == 5.0
    assert state_envelope([1.0, -3.0], NoiseParams(alpha=1e-300, rho=0.5)) == 3.0
    m = state_envelope([0.0], NoiseParams(alpha=1.0, rho=0.9))
    assert abs(m - 10.0) <= 1e-12


def test_states_stay_inside_envelope():
    g = generate("ring", 5)
    rng = np.random.default_rng(1)
    x0 = rng.uniform(-50, 50, 5)
    params = NoiseParams(alpha=2.0, rho=0.8, seed=3)
    trace = run(RunConfig(graph=g, x0=x0, noise=params, scheme="zero_sum", max_iterations=200))
    bound = state_envelope(x0, params)
    assert all(float(np.max(np.abs(x))) <= bound for x in trace.xs)


def test_gaussian_constant_not_envelope_guarded():
    # non-decaying noise may wander past the decaying-noise envelope: no abort
    g = generate("complete", 4)
    cfg = RunConfig(
        graph=g,
        x0=[0.0, 0.0, 0.0, 0.0],
        noise=NoiseParams(seed=2, variance=100.0),
        scheme="gaussian_constant",
        max_iterations=500,
        record_trace=False,
    )
    trace = run(cfg)
    assert trace.k_stop == 500


def test_abort_on_nonfinite_inputs():
    g = generate("path", 2)
    with pytest.raises(EngineAbort):
        run(_zero_cfg(g, [math.nan, 1.0]))
    with pytest.raises(EngineAbort):
        run(_zero_cfg(g, [math.inf, 1.0]))


def test_termination_epsilon():
    g = generate("complete", 6)
    rng = np.random.default_rng(4)
    x0 = rng.uniform(0, 100, 6)
    cfg = _zero_cfg(g, x0, term_epsilon=1e-3, max_iterations=10_000)
    trace = run(cfg)
    assert trace.reason == "term_epsilon"
    assert trace.k_stop < 10_000
    x = trace.x_final
    gaps = [abs(float(x[i] - x[j])) for i, j in g.edges]
    assert max(gaps) <= 1e-3


def test_aggregate_examples():
    g = generate("complete", 3)
    trace = run(_zero_cfg(g, [1.0, 2.0, 3.0]))
    assert aggregate(trace, 3, "average") == pytest.approx(2.0, abs=1e-9)
    assert aggregate(trace, 3, "sum") == pytest.approx(6.0, abs=1e-9)

    single = run(_zero_cfg(build_graph(1, []), [7.5]))
    assert aggregate(single, 1, "sum") == 7.5

    g20 = generate("random_gnp", 20, seed=6, p=0.4)
    rng = np.random.default_rng(6)
    x0 = rng.uniform(0, 100, 20)
    trace = run(_zero_cfg(g20, x0, max_iterations=400))
    assert abs(aggregate(trace, 20, "sum") - float(x0.sum())) <= 1e-9 * np.abs(x0).max() * 20

    with pytest.raises(ValueError):
        aggregate(trace, 20, "median")


def test_transform_aggregates():
    g = generate("complete", 3)
    base = _zero_cfg(g, [1.0, 1.0, 1.0])
    assert transform_aggregate([1.0, 1.0, 1.0], "product", base) == pytest.approx(1.0, rel=1e-12)
    assert transform_aggregate([1.0, 1.0, 1.0], "variance", base) == pytest.approx(0.0, abs=1e-12)
    assert transform_aggregate([1.0, 2.0, 4.0], "product", base) == pytest.approx(8.0, rel=1e-9)

    k2 = _zero_cfg(generate("complete", 2), [0.0, 2.0])
    assert transform_aggregate([0.0, 2.0], "second_moment", k2) == pytest.approx(2.0, rel=1e-9)
    assert transform_aggregate([0.0, 2.0], "variance", k2) == pytest.approx(1.0, rel=1e-9)

    with pytest.raises(ValueError):
        transform_aggregate([0.0, 2.0], "product", k2)
    with pytest.raises(ValueError):
        transform_aggregate([1.0, 2.0], "cumulant", k2)


def test_edge_events_keep_exactness():
    g = generate("complete", 4)
    x0 = np.array([10.0, 20.0, 30.0, 40.0])
    events = (
        TopologyEvent(3, "remove_edge", (0, 1)),
        TopologyEvent(6, "add_edge", (0, 1)),
    )
    trace = run(_zero_cfg(g, x0, events=events, max_iterations=300))
    assert [e.kind for e in trace.events_applied] == ["remove_edge", "add_edge"]
    assert trace.final_true_average == 25.0
    assert trace.final_err <= 1e-10


def test_remove_node_retargets_reference():
    g = generate("complete", 4)
    x0 = np.array([10.0, 20.0, 30.0, 40.0])
    trace = run(
        _zero_cfg(g, x0, events=(TopologyEvent(0, "remove_node", 3),), max_iterations=200)
    )
    ev = trace.events_applied[0]
    assert ev.n_after == 3
    assert ev.true_average_after == 20.0  # mean of survivors' initial states
    assert trace.node_ids[-1] == (0, 1, 2)
    # removal before any mixing: survivors converge exactly to their own mean
    assert trace.final_err <= 1e-10

    # mid-run removal leaves a measurable bias against the survivors' mean
    biased = run(
        _zero_cfg(g, x0, events=(TopologyEvent(2, "remove_node", 3),), max_iterations=200)
    )
    assert biased.final_err == pytest.approx(
        abs(biased.consensus_value - 20.0), rel=1e-12
    )
    assert biased.final_err > 1e-3


def test_disconnecting_event_rejected():
    g = generate("path", 3)
    cfg = _zero_cfg(g, [1.0, 2.0, 3.0], events=(TopologyEvent(1, "remove_edge", (0, 1)),))
    with pytest.raises(ConnectivityError):
        run(cfg)


def test_event_on_missing_node_rejected():
    g = generate("complete", 4)
    events = (
        TopologyEvent(1, "remove_node", 2),
        TopologyEvent(2, "remove_edge", (2, 3)),
    )
    with pytest.raises(ValueError):
        run(_zero_cfg(g, [1.0, 2.0, 3.0, 4.0], events=events))


def test_replay_bitwise_identical(tmp_path):
    g = generate("random_gnp", 8, seed=3, p=0.5)
    rng = np.random.default_rng(3)
    x0 = rng.uniform(0, 100, 8)

    def one():
        cfg = RunConfig(graph=g, x0=x0, noise=NoiseParams(seed=5), scheme="zero_sum")
        return run(cfg)

    a, b = one(), one()
    assert all(np.array_equal(p, q) for p, q in zip(a.xs, b.xs))
    assert a.spreads == b.spreads and a.errs == b.errs
    pa, pb = tmp_path / "a.csv", tmp_path / "b.csv"
    a.write_trace_csv(pa)
    b.write_trace_csv(pb)
    assert pa.read_bytes() == pb.read_bytes()


def test_decay_envelope_zero_noise():
    g = generate("path", 3)
    rng = np.random.default_rng(9)
    x0 = rng.uniform(0, 100, 3)
    params = NoiseParams(alpha=1e-300, rho=0.5)  # vanishing noise scale
    trace = run(RunConfig(graph=g, x0=x0, noise=params, scheme="zero", max_iterations=180))
    eps_w = contraction_factor(metropolis(g))
    points = decay_envelope(trace, eps_w, params)
    assert points and all(p.ok for p in points)
    # with alpha ~ 0 the bound is the pure contraction and it shrinks to 0
    start = next(p for p in points if p.k == 3)
    last = max(points, key=lambda p: p.k)
    assert last.bound < 1e-9 * max(start.bound, 1.0)
    assert last.bound < start.bound


def test_decay_envelope_with_noise_and_static_requirement():
    g = generate("ring", 5)
    rng = np.random.default_rng(11)
    x0 = rng.uniform(0, 100, 5)
    params = NoiseParams(alpha=1.0, rho=0.9, seed=2)
    trace = run(RunConfig(graph=g, x0=x0, noise=params, scheme="zero_sum"))
    eps_w = contraction_factor(metropolis(g))
    points = decay_envelope(trace, eps_w, params)
    assert points and all(p.ok for p in points)

    moved = run(
        RunConfig(
            graph=generate("complete", 4),
            x0=[1.0, 2.0, 3.0, 4.0],
            scheme="zero",
            events=(TopologyEvent(1, "remove_edge", (0, 1)),),
        )
    )
    with pytest.raises(ValueError):
        decay_envelope(moved, 0.5, params)


def test_trace_csv_schema(tmp_path):
    g = generate("path", 3)
    trace = run(_zero_cfg(g, [1.0, 2.0, 3.0], max_iterations=4))
    tp, sp = tmp_path / "t.csv", tmp_path / "s.csv"
    trace.write_trace_csv(tp)
    trace.write_summary_csv(sp)
    tlines = tp.read_text().strip().splitlines()
    assert tlines[0] == "k,node_id,x,x_plus,theta"
    assert len(tlines) == 1 + 3 * 5  # header + n rows for k = 0..4
    assert tlines[-1].endswith(",,")  # final row has no broadcast
    slines = sp.read_text().strip().splitlines()
    assert slines[0] == "k,V,err"
    assert len(slines) == 1 + 5
    # full-precision round trip
    value = tlines[1].split(",")[2]
    assert float(value) == 1.0


def test_record_trace_false():
    g = generate("path", 3)
    trace = run(_zero_cfg(g, [1.0, 2.0, 3.0], record_trace=False))
    assert trace.xs == [] and trace.thetas == []
    assert len(trace.spreads) == trace.k_stop + 1
    with pytest.raises(ValueError):
        trace.write_trace_csv("/tmp/never.csv")


def test_runconfig_validation():
    g = generate("path", 3)
    with pytest.raises(ValueError):
        RunConfig(graph=g, x0=[1.0, 2.0])
    with pytest.raises(ValueError):
        RunConfig(graph=g, x0=[1.0, 2.0, 3.0], scheme="sparkle")
    with pytest.raises(ValueError):
        RunConfig(graph=g, x0=[1.0, 2.0, 3.0], update_form="columnwise")
    with pytest.raises(ValueError):
        RunConfig(graph=g, x0=[1.0, 2.0, 3.0], max_iterations=0)
    with pytest.raises(ValueError):
        RunConfig(graph=g, x0=[1.0, 2.0, 3.0], term_epsilon=-1.0)
    with pytest.raises(ValueError):
        run(_zero_cfg(build_graph(4, [(0, 1), (2, 3)]), [1.0] * 4))
