from __future__ import annotations

import itertools

import pytest

from bn_kbest.bench import random_network
from bn_kbest.conditioning import Cutset, condition_network, enumerate_general, find_loop_cutset
from bn_kbest.errors import CapExceededError, InstantiationError
from bn_kbest.model import BayesianNetwork, is_singly_connected, joint_score, make_network
from bn_kbest.oracle import brute_force_enumerate

from .conftest import assert_same_order, with_zero_entries


def _two_diamonds() -> BayesianNetwork:
    rows = []
    for tag in ("1", "2"):
        rows += [
            (f"A{tag}", ("x", "y"), (), (0.6, 0.4)),
            (f"B{tag}", ("x", "y"), (f"A{tag}",), (0.7, 0.3, 0.2, 0.8)),
            (f"C{tag}", ("x", "y"), (f"A{tag}",), (0.9, 0.1, 0.4, 0.6)),
            (f"D{tag}", ("x", "y"), (f"B{tag}", f"C{tag}"), (0.5, 0.5, 0.1, 0.9, 0.3, 0.7, 0.8, 0.2)),
        ]
    return make_network("two-diamonds", rows)


# --- find_loop_cutset ---

def test_polytree_has_empty_cutset(net_a):
    cutset = find_loop_cutset(net_a)
    assert cutset.members == ()
    assert cutset.joint_size == 1


def test_diamond_cutset(net_d):
    cutset = find_loop_cutset(net_d)
    assert cutset.members == ("A",)
    assert cutset.joint_size == 2
    assert cutset.splits == (("A", ("B", "C")),)


def test_disjoint_loops_need_one_member_each():
    cutset = find_loop_cutset(_two_diamonds())
    assert cutset.members == ("A1", "A2")
    assert cutset.joint_size == 4


def test_cutset_instances_vary_last_member_fastest():
    cutset = Cutset(("A", "B"), (2, 3))
    assert [tuple(c.values()) for c in cutset.instances()] == list(itertools.product(range(2), range(3)))


# --- condition_network ---

@pytest.mark.parametrize("a", [0, 1])
def test_conditioning_preserves_the_chain_rule(net_d, a):
    cond = condition_network(net_d, find_loop_cutset(net_d), {"A": a})
    assert cond.clones == {"A@B", "A@C"}
    assert cond.back_map == {"A@B": "A", "A@C": "A"}
    assert is_singly_connected(cond.network)
    for b, c, d in itertools.product(range(2), repeat=3):
        original = {"A": a, "B": b, "C": c, "D": d}
        # 条件化后 A 只剩一个状态，克隆也只有一个状态
        conditioned = {"A": 0, "B": b, "C": c, "D": d, "A@B": 0, "A@C": 0}
        assert joint_score(cond.network, conditioned) == joint_score(net_d, original)


def test_empty_cutset_returns_same_network(net_a):
    assert condition_network(net_a, Cutset(), {}).network is net_a


def test_inconsistent_cutset_instance(net_d):
    cutset = find_loop_cutset(net_d)
    with pytest.raises(InstantiationError):
        condition_network(net_d, cutset, {"B": 0})
    with pytest.raises(InstantiationError):
        condition_network(net_d, cutset, {"A": 2})


# --- enumerate_general ---

def test_diamond_matches_brute_force(net_d):
    got = enumerate_general(net_d).force_all()
    assert len(got) == 16
    assert_same_order(got, brute_force_enumerate(net_d))


def test_diamond_mpe(net_d):
    top = enumerate_general(net_d).get(0)
    assert top.assignment == {"A": 0, "B": 0, "C": 0, "D": 0}
    assert top.probability == pytest.approx(0.6 * 0.7 * 0.9 * 0.99)


def test_diamond_with_evidence(net_d):
    for ev in ({"D": 1}, {"A": 1}, {"B": 0, "C": 1}):
        assert_same_order(enumerate_general(net_d, ev).force_all(), brute_force_enumerate(net_d, ev))


def test_polytree_is_delegated(net_a):
    stream = enumerate_general(net_a)
    assert stream.branches == ()
    assert_same_order(stream.force_all(), brute_force_enumerate(net_a))


def test_cutset_cap(net_d):
    with pytest.raises(CapExceededError) as exc:
        enumerate_general(net_d, cutset_cap=1)
    assert exc.value.size == 2
    assert exc.value.cap == 1


def test_branches_partition_the_instances(net_d):
    stream = enumerate_general(net_d)
    assert len(stream.branches) == 2
    seen = set()
    for a, branch in enumerate(stream.branches):
        items = branch.force_all()
        assert len(items) == 8
        assert all(it.assignment[0] == a for it in items)
        seen |= {tuple(sorted(it.assignment.items())) for it in items}
    assert len(seen) == 16


@pytest.mark.parametrize("a", [0, 1])
def test_each_branch_is_the_conditional_ranking(net_d, a):
    stream = enumerate_general(net_d)
    scores = [it.score for it in stream.branches[a].force_all()]
    expected = brute_force_enumerate(net_d, {"A": a})
    # 分支里的权重包含 P(A=a) 这个因子，所以与带证据的暴力枚举逐项相同
    assert scores == [inst.score for inst in expected]


def test_branches_are_forced_lazily(net_d):
    stream = enumerate_general(net_d)
    for k in range(1, 10):
        stream.take(k)
        assert all(b.forced <= k for b in stream.branches)


def test_random_multiply_connected_networks_match_brute_force():
    for seed in range(100):
        n = 4 + seed % 4
        net = random_network(n, 3, 4, seed, extra_edges=1 + seed % 3)
        assert not is_singly_connected(net)
        assert_same_order(enumerate_general(net).force_all(), brute_force_enumerate(net))


@pytest.mark.parametrize("seed", range(20))
def test_zero_entries_in_loopy_networks_match_brute_force(seed):
    net = with_zero_entries(random_network(5, 3, 4, seed, extra_edges=2), seed)
    assert_same_order(enumerate_general(net).force_all(), brute_force_enumerate(net))
    assert_same_order(enumerate_general(net, {net.ids[-1]: 0}).force_all(), brute_force_enumerate(net, {net.ids[-1]: 0}))
