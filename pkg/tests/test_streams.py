from __future__ import annotations

import itertools
import math
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bn_kbest.errors import StructureError
from bn_kbest.model import ZERO_SCORE
from bn_kbest.streams import (
    Assign,
    Fringe,
    RankedStream,
    WeightedItem,
    flatten,
    force_counter,
    lazy_product,
    merge_streams,
    ranking_key,
    recursion_headroom,
    scale_stream,
)


def _stream(probs, rank: int = 0, offset: int = 0) -> RankedStream:
    """一个变量（rank）上的流，第 i 个元素赋值 state=offset+i。"""
    items = [WeightedItem.of(p, Assign(rank, offset + i)) for i, p in enumerate(probs)]
    return RankedStream.from_items(items, frozenset((rank,)))


def _probs(stream: RankedStream) -> list[float]:
    return [item.probability for item in stream.force_all()]


def _sorted_ok(items: list[WeightedItem]) -> bool:
    keys = [ranking_key(it.score, it.key) for it in items]
    return keys == sorted(keys)


# --- 基础设施 ---

def test_flatten_nested_payload():
    payload = (Assign(2, 1), ((Assign(0, 3),), (), Assign(1, 0)))
    assert flatten(payload) == {0: 3, 1: 0, 2: 1}


def test_cache_is_append_only_and_exhaustion_sticky():
    s = _stream([0.5, 0.3, 0.2])
    first = s.get(0)
    assert s.get(0) is first
    assert s.get(3) is None
    assert s.exhausted
    assert s.get(5) is None
    assert s.forced == 3


def test_cursors_are_independent():
    s = _stream([0.5, 0.3, 0.2])
    a, b = s.cursor(), s.cursor()
    assert a.next().probability == pytest.approx(0.5)
    assert a.next().probability == pytest.approx(0.3)
    assert b.peek().probability == pytest.approx(0.5)
    assert b.position == 0
    assert [it.probability for it in a] == pytest.approx([0.2])


# --- scale_stream ---

def test_scale_by_half():
    k = WeightedItem.of(0.5, ()).score
    assert _probs(scale_stream(k, _stream([0.8, 0.4]))) == pytest.approx([0.4, 0.2], rel=1e-9)


def test_scale_by_one_is_identity():
    s = _stream([0.8, 0.4])
    assert scale_stream(0, s) is s


def test_scale_empty_stream():
    assert scale_stream(-5, RankedStream.empty()).get(0) is None


def test_scale_is_lazy():
    s = _stream([0.8, 0.4, 0.2])
    scaled = scale_stream(-3, s)
    scaled.get(0)
    assert s.forced == 1


# --- merge_streams ---

def test_merge_two_streams():
    merged = merge_streams([_stream([0.5, 0.2]), _stream([0.4, 0.3], offset=2)])
    assert _probs(merged) == pytest.approx([0.5, 0.4, 0.3, 0.2])


def test_merge_with_empty_stream():
    s = _stream([0.6, 0.1])
    merged = merge_streams([RankedStream.empty(frozenset({0})), s])
    assert [it.payload for it in merged.force_all()] == [it.payload for it in s.force_all()]


def test_merge_three_singletons():
    merged = merge_streams([_stream([0.1]), _stream([0.3], offset=1), _stream([0.2], offset=2)])
    assert _probs(merged) == pytest.approx([0.3, 0.2, 0.1])


def test_merge_rejects_different_node_sets():
    with pytest.raises(StructureError):
        merge_streams([_stream([0.5], rank=0), _stream([0.5], rank=1)])


def test_merge_advances_only_the_winner():
    a, b = _stream([0.5, 0.4, 0.1]), _stream([0.3, 0.2], offset=3)
    merged = merge_streams([a, b])
    merged.get(0)
    assert (a.forced, b.forced) == (1, 1)
    merged.get(1)
    assert (a.forced, b.forced) == (2, 1)


def test_merge_ties_follow_payload_key():
    merged = merge_streams([_stream([0.5], offset=1), _stream([0.5], offset=0)])
    assert [it.payload.state for it in merged.force_all()] == [0, 1]


# --- lazy_product ---

def test_product_of_two_streams():
    prod = lazy_product([_stream([0.6, 0.4], rank=0), _stream([0.7, 0.3], rank=1)])
    assert _probs(prod) == pytest.approx([0.42, 0.28, 0.18, 0.12])


def test_product_with_unit_singleton():
    s = _stream([0.6, 0.3, 0.1], rank=0)
    prod = lazy_product([s, RankedStream.singleton(Assign(5, 0), nodes=frozenset({5}))])
    items = prod.force_all()
    assert [it.probability for it in items] == pytest.approx([0.6, 0.3, 0.1])
    assert [it.assignment for it in items] == [{0: i, 5: 0} for i in range(3)]


def test_product_all_ties_in_index_order():
    prod = lazy_product([_stream([0.5, 0.5], rank=0), _stream([0.5, 0.5], rank=1)])
    items = prod.force_all()
    assert [it.probability for it in items] == pytest.approx([0.25] * 4)
    assert [it.key for it in items] == [(0, 0), (0, 1), (1, 0), (1, 1)]


def test_product_rejects_overlapping_nodes():
    with pytest.raises(StructureError):
        lazy_product([_stream([0.5], rank=0), _stream([0.5], rank=0)])


def test_product_offset_and_stamp():
    k = WeightedItem.of(0.5, ()).score
    prod = lazy_product([_stream([0.6, 0.4], rank=0)], offset=k, stamp=Assign(3, 1))
    items = prod.force_all()
    assert [it.probability for it in items] == pytest.approx([0.3, 0.2])
    assert items[0].assignment == {0: 0, 3: 1}
    assert prod.nodes == frozenset({0, 3})


def test_update_fringe_trace():
    fringe = Fringe([_stream([0.6, 0.4], rank=0), _stream([0.7, 0.3], rank=1)])
    assert fringe.seed()

    assert fringe.update_fringe().probability == pytest.approx(0.42)
    elems = fringe.elements()
    assert [e.index for e in elems] == [(0, 1), (1, 0)]
    assert [math.exp(e.log_weight) for e in elems] == pytest.approx([0.18, 0.28])

    assert fringe.update_fringe().probability == pytest.approx(0.28)
    # (1,1) 被仍在 F 里的 (0,1) 支配，不能进入
    assert [e.index for e in fringe.elements()] == [(0, 1)]

    assert fringe.update_fringe().probability == pytest.approx(0.18)
    assert [e.index for e in fringe.elements()] == [(1, 1)]

    assert fringe.update_fringe().probability == pytest.approx(0.12)
    assert fringe.update_fringe() is None


def test_first_demand_forces_one_item_per_argument():
    args = [_stream([0.5, 0.3, 0.2], rank=r) for r in range(4)]
    prod = lazy_product(args)
    prod.get(0)
    assert [a.forced for a in args] == [1, 1, 1, 1]
    for k in range(1, 20):
        before = sum(a.forced for a in args)
        prod.get(k)
        assert sum(a.forced for a in args) - before <= len(args)


def test_force_counter_counts_cache_appends():
    s = _stream([0.5, 0.3, 0.2])
    force_counter.reset()
    s.get(1)
    assert force_counter.count == 2
    s.get(1)
    assert force_counter.count == 2


def test_zero_scores_stay_clamped():
    zero = WeightedItem.of(0.0, Assign(0, 0)).score
    assert zero == ZERO_SCORE
    (scaled,) = scale_stream(zero, _stream([0.0])).force_all()
    assert scaled.score == ZERO_SCORE
    product = lazy_product([_stream([0.5, 0.0], rank=0), _stream([0.0], rank=1)]).force_all()
    assert [it.score for it in product] == [ZERO_SCORE, ZERO_SCORE]
    assert all(it.log_weight == -math.inf for it in product)


def test_recursion_headroom_is_scoped():
    old = sys.getrecursionlimit()
    with recursion_headroom(old + 500):
        assert sys.getrecursionlimit() == old + 500
        with recursion_headroom(old + 100):
            assert sys.getrecursionlimit() == old + 500
    assert sys.getrecursionlimit() == old


# --- 随机化性质 ---

def _random_args(rng: np.random.Generator, n: int, max_len: int, ties: bool) -> list[RankedStream]:
    out = []
    for r in range(n):
        length = int(rng.integers(1, max_len + 1))
        if ties:
            probs = rng.choice([0.5, 0.25, 0.125], size=length)
        else:
            probs = rng.random(length) + 1e-3
        out.append(_stream(probs.tolist(), rank=r))
    return out


@settings(max_examples=60, deadline=None)
@given(
    lists=st.lists(
        st.lists(st.floats(min_value=0.01, max_value=1.0), min_size=1, max_size=5),
        min_size=1,
        max_size=4,
    )
)
def test_product_equals_brute_force(lists):
    args = [_stream(ps, rank=r) for r, ps in enumerate(lists)]
    items = lazy_product(args).force_all()

    expected = []
    for combo in itertools.product(*(a.force_all() for a in args)):
        expected.append(sum(c.score for c in combo))
    assert sorted(it.score for it in items) == sorted(expected)
    assert len({tuple(sorted(it.assignment.items())) for it in items}) == math.prod(map(len, lists))
    assert _sorted_ok(items)


@settings(max_examples=60, deadline=None)
@given(
    lists=st.lists(
        st.lists(st.sampled_from([0.5, 0.3, 0.2, 0.1]), min_size=0, max_size=6),
        min_size=1,
        max_size=5,
    )
)
def test_merge_equals_brute_force(lists):
    streams = []
    offset = 0
    for ps in lists:
        streams.append(_stream(ps, offset=offset))
        offset += len(ps)
    items = merge_streams(streams, nodes=frozenset({0})).force_all()
    assert len(items) == sum(map(len, lists))
    assert _sorted_ok(items)


def test_emission_is_a_linear_extension_of_domination():
    rng = np.random.default_rng(7)
    for _ in range(200):
        args = _random_args(rng, int(rng.integers(2, 5)), 4, ties=bool(rng.integers(2)))
        fringe = Fringe(args)
        fringe.seed()
        emitted: list[tuple[int, ...]] = []
        while fringe:
            index, _ = fringe.pop()
            fringe.expand(index)
            # 所有直接前驱都已经输出过
            for d, v in enumerate(index):
                if v:
                    assert index[:d] + (v - 1,) + index[d + 1:] in emitted
            emitted.append(index)
        assert len(emitted) == len(set(emitted)) == math.prod(a.forced for a in args)


def test_fringe_size_bound():
    rng = np.random.default_rng(2024)
    pops = 0
    violations = 0
    while pops < 100_000:
        n = int(rng.integers(2, 6))
        args = _random_args(rng, n, 6, ties=bool(rng.integers(2)))
        fringe = Fringe(args)
        fringe.seed()
        while fringe.update_fringe() is not None:
            pops += 1
            if fringe.size > n * fringe.emitted_count:
                violations += 1
    assert violations == 0


@pytest.mark.slow
def test_predecessor_rule_matches_domination_scan():
    rng = np.random.default_rng(99)
    for _ in range(10_000):
        n = int(rng.integers(2, 4))
        seed_args = _random_args(rng, n, 4, ties=bool(rng.integers(2)))
        lists = [[it.probability for it in a.force_all()] for a in seed_args]
        fast = lazy_product([_stream(ps, rank=r) for r, ps in enumerate(lists)], rule="predecessor")
        slow = lazy_product([_stream(ps, rank=r) for r, ps in enumerate(lists)], rule="scan")
        got = [(it.score, it.key) for it in fast.force_all()]
        ref = [(it.score, it.key) for it in slow.force_all()]
        assert got == ref
