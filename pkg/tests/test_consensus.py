import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import dense_gossip, dense_mixing, push_sum_dense
from sparsepush.consensus import BIAS_FLOOR, MixingPlan, PushSumState, debias, gossip_average, gossip_round
from sparsepush.errors import InvalidArgument, NumericalFailure
from sparsepush.topology import (
    DirectedTopology,
    GraphSchedule,
    build_directed_ring,
    effective_mixing_matrix,
    four_node_graphs,
)


def _topologies():
    g = four_node_graphs()
    return [build_directed_ring(4), build_directed_ring(4, reverse=True), build_directed_ring(7), g["a"], g["b"], g["c"]]


def test_identity_mixing_leaves_states():
    # eta so small that W_eff rounds to I in double precision.
    m = effective_mixing_matrix(build_directed_ring(4), 1e-300)
    x = np.random.default_rng(0).standard_normal((4, 3))
    x_next, u_next = gossip_round(x, np.ones(4), m)
    np.testing.assert_array_equal(x_next, x)
    np.testing.assert_array_equal(u_next, np.ones(4))


def test_two_node_one_step_average():
    m = effective_mixing_matrix(build_directed_ring(2), 1.0)
    x_next, u_next = gossip_round(np.array([[0.0], [2.0]]), np.ones(2), m)
    np.testing.assert_array_equal(x_next, [[1.0], [1.0]])
    np.testing.assert_array_equal(u_next, [1.0, 1.0])


@given(seed=st.integers(0, 2**31), eta=st.floats(0.01, 1.0), topo=st.sampled_from(_topologies()), d=st.integers(1, 8))
def test_gossip_matches_dense_oracle(seed, eta, topo, d):
    rng = np.random.default_rng(seed)
    n = topo.n
    base = rng.standard_normal((n, d))
    msgs = rng.standard_normal((n, d))
    u = rng.uniform(0.5, 1.5, n)
    w = dense_mixing(n, topo.edges, eta, topo.nominal_degree)
    x_next, u_next = gossip_round(base, u, effective_mixing_matrix(topo, eta), msgs)
    np.testing.assert_allclose(x_next, dense_gossip(w, base, msgs), rtol=0, atol=1e-12)
    np.testing.assert_allclose(u_next, w @ u, rtol=0, atol=1e-12)


def test_conservation_many_random_rounds():
    rng = np.random.default_rng(5)
    plans = [MixingPlan.from_matrix(effective_mixing_matrix(t, eta)) for t in _topologies() if t.n == 4 for eta in (0.1, 1.0)]
    x = rng.standard_normal((4, 6))
    u = np.ones(4)
    mass = x.sum(axis=0)
    for r in range(10_000):
        x, u = gossip_round(x, u, plans[r % len(plans)])
        assert abs(u.sum() - 4.0) <= 1e-9 * 4
    np.testing.assert_allclose(x.sum(axis=0), mass, rtol=1e-9, atol=1e-9)


def test_shape_errors():
    m = effective_mixing_matrix(build_directed_ring(3), 1.0)
    with pytest.raises(InvalidArgument):
        gossip_round(np.zeros((4, 2)), np.ones(4), m)
    with pytest.raises(InvalidArgument):
        gossip_round(np.zeros((3, 2)), np.ones(3), m, np.zeros((3, 3)))
    with pytest.raises(InvalidArgument):
        gossip_round(np.zeros(3), np.ones(3), m)


def test_debias_examples():
    np.testing.assert_array_equal(debias(np.array([2.0, 4.0]), 2.0), [1.0, 2.0])
    x = np.array([1.5, -3.0])
    np.testing.assert_array_equal(debias(x, 1.0), x)
    assert PushSumState(np.array([2.0]), 4.0).z.tolist() == [0.5]
    for bad in (0.0, -1.0, BIAS_FLOOR / 2, np.nan):
        with pytest.raises(NumericalFailure):
            debias(x, bad)


def test_gossip_average_ring_example():
    out = gossip_average([np.array([v]) for v in (0.0, 4.0, 8.0, 12.0)], GraphSchedule.static(build_directed_ring(4)), 1.0, 200)
    for z in out:
        assert abs(z[0] - 6.0) <= 1e-8


def test_gossip_average_single_node():
    single = GraphSchedule.static(DirectedTopology(1, frozenset()))
    out = gossip_average([np.array([3.0, -1.0])], single, 0.7, 25)
    np.testing.assert_array_equal(out[0], [3.0, -1.0])


def test_alternating_schedule_converges():
    g = four_node_graphs()
    rng = np.random.default_rng(3)
    init = list(rng.standard_normal((4, 5)))
    out = gossip_average(init, GraphSchedule((g["a"], g["b"])), 1.0, 500)
    mean = np.mean(init, axis=0)
    assert max(np.max(np.abs(z - mean)) for z in out) <= 1e-6


def test_geometric_decay_matches_matrix_power():
    topo = four_node_graphs()["a"]
    w = dense_mixing(4, topo.edges, 0.8, topo.nominal_degree)
    rng = np.random.default_rng(11)
    init = rng.standard_normal((4, 3))
    mean = init.mean(axis=0)
    errs = []
    for k in (10, 20, 40):
        out = gossip_average(list(init), GraphSchedule.static(topo), 0.8, k)
        np.testing.assert_allclose(out, push_sum_dense([w] * k, init), atol=1e-12)
        errs.append(max(np.linalg.norm(z - mean) for z in out))
    assert errs[1] < errs[0] and errs[2] < errs[1]
    # Geometric: doubling the rounds roughly squares the relative error.
    assert errs[2] / errs[1] <= 10 * (errs[1] / errs[0]) ** 2


def test_doubly_stochastic_keeps_unit_weights():
    trace = []
    gossip_average(list(np.eye(5)), GraphSchedule.static(build_directed_ring(5)), 0.6, 30, trace=trace)
    assert all(u == pytest.approx(1.0, abs=1e-14) for _, _, u, _ in trace)
    assert len(trace) == 30 * 5
    assert trace[-1][0] == 30


def test_negative_rounds():
    with pytest.raises(InvalidArgument):
        gossip_average([np.zeros(1)] * 4, GraphSchedule.static(build_directed_ring(4)), 1.0, -1)
