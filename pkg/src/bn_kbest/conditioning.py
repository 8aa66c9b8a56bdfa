from __future__ import annotations

import itertools
import math
from collections.abc import Iterator, Mapping
from dataclasses import dataclass, field

import networkx as nx
from loguru import logger

from .config import config
from .engine import (
    EnumerationSession,
    InstanceStream,
    apply_evidence,
    enumerate_instances,
    ensure_valid,
    with_zero_tail,
)
from .errors import CapExceededError, InstantiationError
from .model import BayesianNetwork, Cpt, Variable, is_singly_connected, restrict_states
from .streams import merge_streams, recursion_headroom


@dataclass(frozen=True)
class Cutset:
    members: tuple[str, ...] = ()
    cards: tuple[int, ...] = ()
    # 每个成员被拆开的子节点弧：(member, (child, ...))
    splits: tuple[tuple[str, tuple[str, ...]], ...] = ()

    @property
    def joint_size(self) -> int:
        return math.prod(self.cards)

    def __len__(self) -> int:
        return len(self.members)

    def instances(self) -> Iterator[dict[str, int]]:
        """按成员顺序、最后一个成员变化最快。"""
        for combo in itertools.product(*map(range, self.cards)):
            yield dict(zip(self.members, combo))


@dataclass(frozen=True)
class ConditionedNetwork:
    network: BayesianNetwork
    # 克隆节点 id -> 原变量 id
    back_map: Mapping[str, str] = field(default_factory=dict)
    instance: Mapping[str, int] = field(default_factory=dict)

    @property
    def clones(self) -> frozenset[str]:
        return frozenset(self.back_map)


def _is_forest(g: nx.Graph) -> bool:
    return g.number_of_edges() == g.number_of_nodes() - nx.number_connected_components(g)


def find_loop_cutset(net: BayesianNetwork) -> Cutset:
    """贪心：每轮在“有一条出弧位于环上”的节点里挑当前度数最大的（打平取声明序靠前的），
    把它位于环上的出弧都拆到克隆节点上，直到无向图成为森林。不保证最小。
    """
    g = net.undirected.copy()
    out_arcs = {vid: list(net.children[vid]) for vid in net.ids}
    members: list[str] = []
    splits: list[tuple[str, tuple[str, ...]]] = []

    while not _is_forest(g):
        # 环上的边恰好是非桥边
        bridges = {frozenset(e) for e in nx.bridges(g)}
        best: tuple[int, str, list[str]] | None = None
        for vid in net.ids:
            cut = [c for c in out_arcs[vid] if frozenset((vid, c)) not in bridges]
            if not cut:
                continue
            deg = g.degree(vid)
            if best is None or deg > best[0]:
                best = (deg, vid, cut)
        assert best is not None
        _, w, cut = best
        g.remove_edges_from((w, c) for c in cut)
        out_arcs[w] = [c for c in out_arcs[w] if c not in cut]
        members.append(w)
        splits.append((w, tuple(cut)))

    cards = tuple(net.cardinality(m) for m in members)
    return Cutset(tuple(members), cards, tuple(splits))


def condition_network(
    net: BayesianNetwork, cutset: Cutset, c: Mapping[str, int]
) -> ConditionedNetwork:
    """割集成员只保留 c 中的状态；被拆的子节点弧改接到单状态、先验为 1 的克隆根上。

    成员自身的 CPT 因子只在原节点上算一次，克隆贡献因子 1，所以任一与 c 一致的实例的联合概率不变。
    """
    if set(c) != set(cutset.members):
        raise InstantiationError(f"割集实例 {dict(c)} 与割集成员 {list(cutset.members)} 不一致")
    for vid, card in zip(cutset.members, cutset.cards):
        if not 0 <= c[vid] < card:
            raise InstantiationError(f"割集成员 {vid!r} 的状态下标 {c[vid]} 越界（共 {card} 个状态）")
    if not cutset.members:
        return ConditionedNetwork(net)

    restricted = restrict_states(net, c)
    taken = set(restricted.ids)
    clone_of: dict[tuple[str, str], str] = {}
    back_map: dict[str, str] = {}
    for w, children in cutset.splits:
        for child in children:
            clone = f"{w}@{child}"
            while clone in taken:
                clone += "'"
            taken.add(clone)
            clone_of[(w, child)] = clone
            back_map[clone] = w

    variables: list[Variable] = []
    for var in restricted.variables:
        parents = tuple(clone_of.get((p, var.id), p) for p in var.parents)
        variables.append(Variable(var.id, var.states, parents))
    cpts = list(restricted.cpts)
    # 克隆追加在最后；父节点位置不变，CPT 布局也就不变
    for clone, w in back_map.items():
        variables.append(Variable(clone, restricted.variable(w).states))
        cpts.append(Cpt(clone, (1.0,)))

    conditioned = BayesianNetwork(net.name, tuple(variables), tuple(cpts))
    return ConditionedNetwork(conditioned, back_map, dict(c))


def enumerate_general(
    net: BayesianNetwork,
    ev: Mapping[str, int] | None = None,
    *,
    cutset_cap: int | None = None,
    root: str | None = None,
) -> InstanceStream:
    """任意（有向无环）网络的惰性枚举：多树直接走消息传递，否则按割集实例分别枚举再合并。"""
    ensure_valid(net)
    if is_singly_connected(net):
        return enumerate_instances(net, ev, root=root)

    ev_net = apply_evidence(net, ev or {})
    cutset = find_loop_cutset(ev_net)
    cap = config.CUTSET_CAP if cutset_cap is None else cutset_cap
    if cutset.joint_size > cap:
        raise CapExceededError("割集联合状态数", cutset.joint_size, cap)
    logger.info(f"✅ 割集 {list(cutset.members)}, joint_size={cutset.joint_size}")

    branches = []
    for c in cutset.instances():
        cond = condition_network(ev_net, cutset, c)
        session = EnumerationSession(cond.network, reference=net, hidden=cond.clones)
        with recursion_headroom():
            stream = session.stream
            # Merge 需要每个分支的头元素
            stream.get(0)
        branches.append(stream)

    merged = with_zero_tail(merge_streams(branches), ev_net, net)
    return InstanceStream(merged, net, tuple(branches))
