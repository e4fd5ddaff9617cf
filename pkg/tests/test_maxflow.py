import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fgunion import FlowNetwork, solve_min_cut


def exhaustive_min_cut(net):
    """Brute-force oracle: enumerate every source-side subset of the nodes.

    Cut value of subset S = source caps of nodes outside S + target caps of
    nodes inside S + directed arc caps crossing S -> complement. The minimum
    over all 2^n subsets equals the max flow. Returns (value, in_s, cuts)
    so callers can inspect every optimal partition.
    """
    n = net.node_count
    masks = np.arange(1 << n, dtype=np.uint64)
    in_s = ((masks[:, None] >> np.arange(n, dtype=np.uint64)) & 1).astype(bool)
    cut = (~in_s) @ net.source_caps + in_s @ net.target_caps
    for u, v, cuv, cvu in zip(net.arc_u, net.arc_v, net.cap_uv, net.cap_vu):
        su, sv = in_s[:, u], in_s[:, v]
        cut = cut + np.where(su & ~sv, cuv, 0.0) + np.where(sv & ~su, cvu, 0.0)
    return float(cut.min()), in_s, cut


def random_network(rng, max_nodes=12, integer_caps=True):
    n = int(rng.integers(1, max_nodes + 1))
    pairs = [(u, v) for u in range(n) for v in range(u + 1, n)]
    take = rng.random(len(pairs)) < 0.5 if pairs else []

    def cap(size=None):
        if integer_caps:
            return rng.integers(0, 11, size=size).astype(np.float64)
        return np.round(rng.random(size) * 10, 3)

    arcs = [(u, v, float(cap()), float(cap()))
            for (u, v), t in zip(pairs, take) if t]
    return FlowNetwork.build(n, arcs, source_caps=cap(n), target_caps=cap(n))


def cut_value_of(net, source_side):
    _, in_s, cuts = exhaustive_min_cut(net)
    idx = int(sum(1 << i for i, s in enumerate(source_side) if s))
    return float(cuts[idx])


def test_single_node_examples():
    # one node, source cap 5, target cap 3: flow min(5,3)=3, node on source side
    net = FlowNetwork.build(1, [], source_caps=np.array([5.0]), target_caps=np.array([3.0]))
    res = solve_min_cut(net)
    assert res.flow_value == 3.0
    assert res.source_side.tolist() == [True]

    # reversed caps: node drained to the target side
    net2 = FlowNetwork.build(1, [], source_caps=np.array([3.0]), target_caps=np.array([5.0]))
    res2 = solve_min_cut(net2)
    assert res2.flow_value == 3.0
    assert res2.source_side.tolist() == [False]


def test_two_node_path():
    # S -> A (6), A -> B cap 4, B -> T (6): the middle arc is the bottleneck
    net = FlowNetwork.build(2, [(0, 1, 4.0, 0.0)],
                            source_caps=np.array([6.0, 0.0]),
                            target_caps=np.array([0.0, 6.0]))
    res = solve_min_cut(net)
    assert res.flow_value == 4.0
    assert res.source_side.tolist() == [True, False]


def test_saturated_source():
    # both nodes want to drain but the source arcs limit the flow
    net = FlowNetwork.build(2, [(0, 1, 10.0, 10.0)],
                            source_caps=np.array([2.0, 3.0]),
                            target_caps=np.array([100.0, 100.0]))
    res = solve_min_cut(net)
    assert res.flow_value == 5.0
    assert not res.source_side.any()


def test_oracle_small_batch():
    rng = np.random.default_rng(42)
    for _ in range(200):
        net = random_network(rng, max_nodes=8)
        res = solve_min_cut(net)
        best, _, _ = exhaustive_min_cut(net)
        assert res.flow_value == best
        # the returned partition is itself optimal
        assert cut_value_of(net, res.source_side) == best


def test_source_side_is_minimal():
    # residual reachability gives the unique minimal optimal source side:
    # it must be contained in every optimal partition
    rng = np.random.default_rng(7)
    for _ in range(100):
        net = random_network(rng, max_nodes=7)
        res = solve_min_cut(net)
        best, in_s, cuts = exhaustive_min_cut(net)
        optimal = in_s[cuts == best]
        assert cut_value_of(net, res.source_side) == best
        for part in optimal:
            assert np.all(part[res.source_side])  # source_side subset of part


def test_determinism():
    rng = np.random.default_rng(3)
    net = random_network(rng, max_nodes=12)
    a = solve_min_cut(net)
    b = solve_min_cut(net)
    assert a.flow_value == b.flow_value
    np.testing.assert_array_equal(a.source_side, b.source_side)


def test_validation_rejects_bad_networks():
    ok_caps = dict(source_caps=np.array([1.0, 1.0]), target_caps=np.array([1.0, 1.0]))

    with pytest.raises(ValueError):  # node out of range
        FlowNetwork.build(2, [(0, 2, 1.0, 1.0)], **ok_caps)
    with pytest.raises(ValueError):  # self arc
        FlowNetwork.build(2, [(1, 1, 1.0, 1.0)], **ok_caps)
    with pytest.raises(ValueError):  # duplicate unordered pair
        FlowNetwork.build(2, [(0, 1, 1.0, 1.0), (1, 0, 1.0, 1.0)], **ok_caps)
    with pytest.raises(ValueError):  # negative capacity
        FlowNetwork.build(2, [(0, 1, -1.0, 1.0)], **ok_caps)
    with pytest.raises(ValueError):  # NaN capacity
        FlowNetwork.build(1, [], source_caps=np.array([np.nan]), target_caps=np.array([0.0]))
    with pytest.raises(ValueError):  # no nodes
        FlowNetwork.build(0, [], source_caps=np.array([]), target_caps=np.array([]))
    with pytest.raises(ValueError):  # terminal caps wrong length
        FlowNetwork.build(2, [], source_caps=np.array([1.0]), target_caps=np.array([1.0, 1.0]))
    with pytest.raises(ValueError):  # fractional node index
        FlowNetwork.build(2, [(0.5, 1, 1.0, 1.0)], **ok_caps)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_flow_matches_oracle_property(seed):
    rng = np.random.default_rng(seed)
    net = random_network(rng, max_nodes=6)
    res = solve_min_cut(net)
    best, _, _ = exhaustive_min_cut(net)
    assert res.flow_value == best


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), bump=st.integers(1, 5))
def test_flow_monotone_in_capacity(seed, bump):
    # raising one capacity never lowers the max flow
    rng = np.random.default_rng(seed)
    net = random_network(rng, max_nodes=6)
    base = solve_min_cut(net).flow_value
    src = net.source_caps.copy()
    src[int(rng.integers(net.node_count))] += bump
    arcs = list(zip(net.arc_u.tolist(), net.arc_v.tolist(),
                    net.cap_uv.tolist(), net.cap_vu.tolist()))
    bigger = FlowNetwork.build(net.node_count, arcs, src, net.target_caps)
    assert solve_min_cut(bigger).flow_value >= base
