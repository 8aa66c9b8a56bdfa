"""多树（singly connected）网络上的惰性 k-best 枚举。

每条弧上传两种消息：父→子的 π 消息（按先验排序）和子→父的 λ 消息（按条件概率排序），
消息的每个分量都是一个 RankedStream。根节点之上挂一个单状态的哑节点 D，
根发给哑节点的 λ 消息（唯一分量）就是全体实例按概率递减的流；
0 概率的实例不走消息，而是由 zero_assignments 按 key 字典序补在最后。
"""

from __future__ import annotations

import itertools
from collections import Counter
from collections.abc import Iterator, Mapping, Sequence
from dataclasses import dataclass, field
from functools import cached_property

import networkx as nx
from loguru import logger

from .errors import EvidenceError, NetworkValidationError, StructureError
from .model import (
    BayesianNetwork,
    Cpt,
    Instantiation,
    ZERO_SCORE,
    Variable,
    is_singly_connected,
    is_zero_score,
    restrict_states,
    score_to_log,
    suggest,
    validate_network,
    zero_assignments,
)
from .streams import (
    Assign,
    RankedStream,
    WeightedItem,
    flatten,
    lazy_product,
    merge_streams,
    recursion_headroom,
    scale_stream,
)

DUMMY_ROOT = "__D__"
DUMMY_STATE = "d"


# ---------------------------------------------------------------------------
# 证据与哑根
# ---------------------------------------------------------------------------

def check_evidence(net: BayesianNetwork, ev: Mapping[str, int]) -> dict[str, int]:
    out: dict[str, int] = {}
    for vid, state in ev.items():
        if vid not in net.index:
            raise EvidenceError(f"证据里有未知变量 {vid!r}{suggest(vid, net.ids)}")
        card = net.cardinality(vid)
        if not isinstance(state, int) or not 0 <= state < card:
            raise EvidenceError(f"变量 {vid!r} 的证据状态 {state!r} 越界（共 {card} 个状态）")
        out[vid] = state
    return out


def apply_evidence(net: BayesianNetwork, ev: Mapping[str, int]) -> BayesianNetwork:
    """证据变量只保留观测到的状态；CPT 不重新归一，输出的权重仍是先验概率。"""
    return restrict_states(net, check_evidence(net, ev))


def attach_dummy_root(
    net: BayesianNetwork, r: str | Sequence[str], *, dummy: str = DUMMY_ROOT
) -> tuple[BayesianNetwork, str]:
    """给 r（或每个连通分量的一个根）加上单状态父节点 D，先验为 1。

    D 追加在父节点列表最后；D 只有一个状态，所以 r 的扁平 CPT 表不变。
    """
    roots = (r,) if isinstance(r, str) else tuple(r)
    for vid in roots:
        net.variable(vid)
    while dummy in net.index:
        dummy = "_" + dummy
    variables: list[Variable] = []
    for var in net.variables:
        if var.id in roots:
            var = Variable(var.id, var.states, (*var.parents, dummy))
        variables.append(var)
    variables.append(Variable(dummy, (DUMMY_STATE,)))
    cpts = (*net.cpts, Cpt(dummy, (1.0,)))
    return BayesianNetwork(net.name, tuple(variables), cpts), dummy


def component_roots(net: BayesianNetwork) -> tuple[str, ...]:
    """每个连通分量里声明顺序最靠前的节点。"""
    seen: set[str] = set()
    roots: list[str] = []
    for vid in net.ids:
        if vid in seen:
            continue
        roots.append(vid)
        seen.update(_component(net, vid))
    return tuple(roots)


def _component(net: BayesianNetwork, vid: str) -> set[str]:
    return set(nx.node_connected_component(net.undirected, vid))


# ---------------------------------------------------------------------------
# 消息
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MessageScope:
    source: str
    target: str
    # 断开 source–target 弧后 source 一侧的变量，会话网络里的 id（包括隐藏节点）
    nodes: frozenset[str]


@dataclass(frozen=True)
class PiMessage:
    scope: MessageScope
    # 按 Y 的状态下标
    entries: tuple[RankedStream, ...]
    ranks: frozenset[int]


@dataclass(frozen=True)
class LambdaMessage:
    scope: MessageScope
    # 按 X 的状态下标
    entries: tuple[RankedStream, ...]
    ranks: frozenset[int]


Message = PiMessage | LambdaMessage


def _strides(cards: Sequence[int]) -> tuple[int, ...]:
    out = [1] * len(cards)
    for i in range(len(cards) - 2, -1, -1):
        out[i] = out[i + 1] * cards[i + 1]
    return tuple(out)


class EnumerationSession:
    """一次枚举：会话网络（已施加证据、已挂哑根）+ 消息 memo。

    reference 是用户给出的原始网络：输出的变量序号和状态下标都按它来算；
    hidden 里的节点（哑根、条件化产生的克隆）不出现在 payload 里。
    """

    def __init__(
        self,
        network: BayesianNetwork,
        *,
        reference: BayesianNetwork | None = None,
        hidden: frozenset[str] = frozenset(),
        roots: Sequence[str] | None = None,
    ) -> None:
        self.reference = reference or network
        self.original = network
        self.roots = tuple(roots) if roots is not None else component_roots(network)
        if network.variables:
            self.network, self.dummy = attach_dummy_root(network, self.roots)
        else:
            self.network, self.dummy = network, None
        self.hidden = frozenset(hidden) | ({self.dummy} if self.dummy else frozenset())
        self.memo: dict[tuple[str, str], Message] = {}
        self.requests: Counter[tuple[str, str]] = Counter()
        self.computed: Counter[tuple[str, str]] = Counter()
        self._in_progress: set[tuple[str, str]] = set()
        self._leaves: dict[str, tuple[Assign | None, ...]] = {}
        logger.debug(
            f"📥 会话: {len(network.variables)} 个节点, 根 {list(self.roots)}, 隐藏 {len(self.hidden)} 个"
        )

    # --- 输出坐标 ---

    def rank(self, vid: str) -> int | None:
        if vid in self.hidden or vid not in self.reference.index:
            return None
        return self.reference.index[vid]

    def leaves(self, vid: str) -> tuple[Assign | None, ...]:
        """vid 每个（会话内）状态对应的 payload 叶子；隐藏节点为 None。"""
        cached = self._leaves.get(vid)
        if cached is not None:
            return cached
        var = self.network.variable(vid)
        rank = self.rank(vid)
        if rank is None:
            out: tuple[Assign | None, ...] = (None,) * var.cardinality
        else:
            ref = self.reference.variables[rank]
            out = tuple(Assign(rank, ref.state_index(name)) for name in var.states)
        self._leaves[vid] = out
        return out

    # --- 消息驱动 ---

    def message(self, y: str, x: str) -> Message:
        return compute_message(y, x, self)

    @cached_property
    def stream(self) -> RankedStream:
        """根发给哑节点的 λ 消息；多个连通分量时是各分量流的乘积。"""
        if self.dummy is None:
            return RankedStream.singleton(())
        with recursion_headroom():
            msgs = [self.message(r, self.dummy) for r in self.roots]
        if len(msgs) == 1:
            return msgs[0].entries[0]
        ranks = frozenset().union(*(m.ranks for m in msgs))
        return lazy_product([m.entries[0] for m in msgs], nodes=ranks)

    def instances(self) -> InstanceStream:
        return InstanceStream(with_zero_tail(self.stream, self.original, self.reference), self.reference)


def compute_message(y: str, x: str, session: EnumerationSession) -> Message:
    net = session.network
    key = (y, x)
    session.requests[key] += 1
    cached = session.memo.get(key)
    if cached is not None:
        return cached
    if key in session._in_progress:
        raise StructureError(f"消息 {y}→{x} 递归回到了自身：网络不是多树")
    y_var = net.variable(y)
    if x in y_var.parents:
        builder = compute_lambda_message
    elif x in net.children[y]:
        builder = compute_pi_message
    else:
        raise StructureError(f"{y!r} 与 {x!r} 之间没有弧")

    session._in_progress.add(key)
    try:
        # 先递归地把 Y 的其他邻居发来的消息都算好
        for n in net.neighbors(y):
            if n != x:
                compute_message(n, y, session)
        msg = builder(y, x, session)
    finally:
        session._in_progress.discard(key)
    session.memo[key] = msg
    session.computed[key] += 1
    return msg


def _incoming(session: EnumerationSession, ids: Sequence[str], y: str) -> list[Message]:
    out = []
    for n in ids:
        msg = session.memo.get((n, y))
        if msg is None:
            msg = compute_message(n, y, session)
        out.append(msg)
    return out


def _scope(session: EnumerationSession, y: str, x: str, incoming: Sequence[Message]) -> MessageScope:
    nodes = frozenset((y,)).union(*(m.scope.nodes for m in incoming))
    return MessageScope(y, x, nodes)


def _ranks(session: EnumerationSession, y: str, incoming: Sequence[Message]) -> frozenset[int]:
    rank = session.rank(y)
    base = frozenset() if rank is None else frozenset((rank,))
    return base.union(*(m.ranks for m in incoming))


def _lambda_products(
    session: EnumerationSession, y: str, child_msgs: Sequence[Message], ranks: frozenset[int]
) -> list[RankedStream]:
    """Y 的（除去目标以外的）孩子发来的 λ 分量在 Y=y 处的乘积，并打上 Y=y 的叶子。"""
    leaves = session.leaves(y)
    out: list[RankedStream] = []
    for s, leaf in enumerate(leaves):
        payload = () if leaf is None else leaf
        if not child_msgs:
            out.append(RankedStream.singleton(payload, nodes=ranks))
        else:
            args = [m.entries[s] for m in child_msgs]
            out.append(lazy_product(args, stamp=leaf, nodes=ranks))
    return out


def _arm(
    k: int, parent_streams: Sequence[RankedStream], l_lambda: RankedStream, ranks: frozenset[int]
) -> RankedStream:
    # 父节点 π 分量与孩子 λ 乘积的乘积再平移 k；k 直接并进乘积的 offset
    if not parent_streams:
        return scale_stream(k, l_lambda)
    return lazy_product([*parent_streams, l_lambda], offset=k, nodes=ranks)


def compute_pi_message(y: str, x: str, session: EnumerationSession) -> PiMessage:
    """Y 是 X 的父节点。"""
    net = session.network
    var = net.variable(y)
    children = [c for c in net.children[y] if c != x]
    child_msgs = _incoming(session, children, y)
    parent_msgs = _incoming(session, var.parents, y)

    child_ranks = _ranks(session, y, child_msgs)
    ranks = child_ranks.union(*(m.ranks for m in parent_msgs))
    # 1) 每个 y 先算孩子 λ 分量的乘积
    l_lambda = _lambda_products(session, y, child_msgs, child_ranks)

    scores = net.scores(y)
    card = var.cardinality
    parent_cards = [net.cardinality(p) for p in var.parents]
    entries: list[RankedStream] = []
    for s in range(card):
        arms: list[RankedStream] = []
        # 2) 父节点状态组合：靠前的父节点变化最慢，与 CPT 布局一致
        for flat, combo in enumerate(itertools.product(*map(range, parent_cards))):
            k = scores[flat * card + s]
            parents = [m.entries[u] for m, u in zip(parent_msgs, combo)]
            arms.append(_arm(k, parents, l_lambda[s], ranks))
        # 3) 所有父状态组合的分支合并成 Y=y 的分量
        entries.append(merge_streams(arms, nodes=ranks))

    scope = _scope(session, y, x, [*child_msgs, *parent_msgs])
    return PiMessage(scope, tuple(entries), ranks)


def compute_lambda_message(y: str, x: str, session: EnumerationSession) -> LambdaMessage:
    """Y 是 X 的孩子。"""
    net = session.network
    var = net.variable(y)
    x_pos = var.parents.index(x)
    others = [p for p in var.parents if p != x]
    child_msgs = _incoming(session, net.children[y], y)
    parent_msgs = _incoming(session, others, y)

    child_ranks = _ranks(session, y, child_msgs)
    ranks = child_ranks.union(*(m.ranks for m in parent_msgs))
    # 孩子 λ 分量的乘积在主循环之前对所有 y 算好，各个 x 共用
    l_lambda = _lambda_products(session, y, child_msgs, child_ranks)

    scores = net.scores(y)
    card = var.cardinality
    cards = [net.cardinality(p) for p in var.parents] + [card]
    strides = _strides(cards)
    other_pos = [i for i in range(len(var.parents)) if i != x_pos]
    other_cards = [cards[i] for i in other_pos]

    entries: list[RankedStream] = []
    for xs in range(cards[x_pos]):
        base = xs * strides[x_pos]
        arms: list[RankedStream] = []
        for s in range(card):
            for combo in itertools.product(*map(range, other_cards)):
                flat = base + s + sum(u * strides[i] for i, u in zip(other_pos, combo))
                parents = [m.entries[u] for m, u in zip(parent_msgs, combo)]
                arms.append(_arm(scores[flat], parents, l_lambda[s], ranks))
        # X=x 的分量：各分支合并
        entries.append(merge_streams(arms, nodes=ranks))

    scope = _scope(session, y, x, [*child_msgs, *parent_msgs])
    return LambdaMessage(scope, tuple(entries), ranks)


# ---------------------------------------------------------------------------
# 面向用户的流
# ---------------------------------------------------------------------------

@dataclass
class InstanceStream:
    """把原始 RankedStream 的 payload 翻译成原始网络上的 Instantiation。"""

    raw: RankedStream
    network: BayesianNetwork
    # 条件化时每个割集实例对应的子流（多树路径为空）
    branches: tuple[RankedStream, ...] = field(default=())

    def _convert(self, item) -> Instantiation:
        flat = flatten(item.payload)
        ids = self.network.ids
        assignment = {ids[r]: flat[r] for r in sorted(flat)}
        return Instantiation(assignment, score_to_log(item.score), item.score)

    def get(self, index: int) -> Instantiation | None:
        with recursion_headroom():
            item = self.raw.get(index)
        return None if item is None else self._convert(item)

    def cursor(self) -> Iterator[Instantiation]:
        cur = self.raw.cursor()
        while True:
            with recursion_headroom():
                item = cur.next()
            if item is None:
                return
            yield self._convert(item)

    def __iter__(self) -> Iterator[Instantiation]:
        return self.cursor()

    def take(self, k: int) -> list[Instantiation]:
        with recursion_headroom():
            items = self.raw.take(k)
        return [self._convert(item) for item in items]

    def force_all(self) -> list[Instantiation]:
        with recursion_headroom():
            items = self.raw.force_all()
        return [self._convert(item) for item in items]


def with_zero_tail(stream: RankedStream, network: BayesianNetwork, reference: BayesianNetwork) -> RankedStream:
    """有限权重的前缀照搬 stream；遇到第一个 0 概率元素后，剩下的实例全部来自 zero_assignments。

    network 是施加证据后的网络，变量顺序与 reference 相同；状态下标换算回 reference。
    """
    states = [
        tuple(reference.variables[rank].state_index(name) for name in var.states)
        for rank, var in enumerate(network.variables)
    ]

    def _items() -> Iterator[WeightedItem]:
        for item in stream.cursor():
            if is_zero_score(item.score):
                break
            yield item
        else:
            return
        for values in zero_assignments(network):
            payload = tuple(Assign(rank, states[rank][s]) for rank, s in enumerate(values))
            yield WeightedItem(ZERO_SCORE, payload)

    return RankedStream(_items(), stream.nodes)


def ensure_valid(net: BayesianNetwork) -> None:
    report = validate_network(net)
    if not report.ok:
        raise NetworkValidationError(report)


def enumerate_instances(
    net: BayesianNetwork,
    ev: Mapping[str, int] | None = None,
    *,
    root: str | None = None,
) -> InstanceStream:
    """按先验概率递减（即给定证据下的后验顺序）枚举所有与证据一致的完整实例。"""
    ensure_valid(net)
    if not is_singly_connected(net):
        raise StructureError(f"网络 {net.name!r} 不是多树，请改用 enumerate_general")
    conditioned = apply_evidence(net, ev or {})
    roots = None
    if root is not None:
        # 指定的根替换它所在分量的默认根
        conditioned.variable(root)
        comp = _component(conditioned, root)
        roots = [root if r in comp else r for r in component_roots(conditioned)]
    session = EnumerationSession(conditioned, reference=net, roots=roots)
    return session.instances()
