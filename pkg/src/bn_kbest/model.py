from __future__ import annotations

import math
from collections.abc import Iterable, Iterator, Mapping, Sequence
from dataclasses import dataclass, replace
from functools import cached_property

import networkx as nx
import numpy as np
from thefuzz import process

from .errors import InstantiationError, StructureError

# 权重统一用“定点对数”整数表示：round(ln p * 2^40)。
# 整数加法满足结合律，不同根节点 / 不同割集实例 / oracle 求和顺序不同，结果也完全一致。
SCORE_SCALE = 1 << 40
# 概率为 0 的因子记为一个远小于任何正常对数值的负数；含 0 因子的和一律截到 ZERO_SCORE，
# 所以 0 概率实例之间全部打平，只按 key 排序。
ZERO_SCORE = -(1 << 100)
_ZERO_FLOOR = ZERO_SCORE // 2

NORMALIZATION_TOLERANCE = 1e-9


def log_scores(table: Sequence[float]) -> tuple[int, ...]:
    # 逐个用 math.log：同一个概率值无论出现在哪张表里都得到同一个整数
    return tuple(ZERO_SCORE if p <= 0.0 else round(math.log(p) * SCORE_SCALE) for p in table)


def probability_score(p: float) -> int:
    return log_scores((p,))[0]


def score_to_log(score: int) -> float:
    if score <= _ZERO_FLOOR:
        return -math.inf
    return score / SCORE_SCALE


def is_zero_score(score: int) -> bool:
    return score <= _ZERO_FLOOR


def clamp_score(score: int) -> int:
    return ZERO_SCORE if score <= _ZERO_FLOOR else score


def suggest(name: str, choices: Iterable[str]) -> str:
    """拼写提示：返回 “(did you mean X?)” 或空串。"""
    pool = list(choices)
    if not name or not pool:
        return ""
    hit = process.extractOne(name, pool, score_cutoff=60)
    return f" (did you mean {hit[0]!r}?)" if hit else ""


@dataclass(frozen=True)
class Variable:
    id: str
    states: tuple[str, ...]
    parents: tuple[str, ...] = ()

    @property
    def cardinality(self) -> int:
        return len(self.states)

    def state_index(self, name: str) -> int:
        try:
            return self.states.index(name)
        except ValueError:
            raise InstantiationError(
                f"变量 {self.id} 没有状态 {name!r}{suggest(name, self.states)}"
            ) from None


@dataclass(frozen=True)
class Cpt:
    owner: str
    # 行优先：靠前的父节点变化最慢，owner 自身变化最快
    table: tuple[float, ...]


@dataclass(frozen=True)
class BayesianNetwork:
    name: str
    variables: tuple[Variable, ...] = ()
    cpts: tuple[Cpt, ...] = ()

    @cached_property
    def index(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for pos, var in enumerate(self.variables):
            out.setdefault(var.id, pos)
        return out

    @cached_property
    def ids(self) -> tuple[str, ...]:
        return tuple(v.id for v in self.variables)

    @cached_property
    def _cpt_map(self) -> dict[str, Cpt]:
        out: dict[str, Cpt] = {}
        for cpt in self.cpts:
            out.setdefault(cpt.owner, cpt)
        return out

    @cached_property
    def children(self) -> dict[str, tuple[str, ...]]:
        out: dict[str, list[str]] = {v.id: [] for v in self.variables}
        for var in self.variables:
            for p in var.parents:
                if p in out and var.id not in out[p]:
                    out[p].append(var.id)
        return {k: tuple(v) for k, v in out.items()}

    @cached_property
    def graph(self) -> nx.DiGraph:
        """有向图（只含能解析的弧，忽略自环）。"""
        g = nx.DiGraph()
        g.add_nodes_from(self.ids)
        for var in self.variables:
            for p in var.parents:
                if p in self.index and p != var.id:
                    g.add_edge(p, var.id)
        return g

    @cached_property
    def undirected(self) -> nx.Graph:
        return self.graph.to_undirected(as_view=False)

    @cached_property
    def _scores(self) -> dict[str, tuple[int, ...]]:
        return {cpt.owner: log_scores(cpt.table) for cpt in self.cpts}

    def variable(self, vid: str) -> Variable:
        try:
            return self.variables[self.index[vid]]
        except KeyError:
            raise InstantiationError(f"未知变量 {vid!r}{suggest(vid, self.ids)}") from None

    def cpt(self, vid: str) -> Cpt:
        try:
            return self._cpt_map[vid]
        except KeyError:
            raise InstantiationError(f"变量 {vid!r} 没有 CPT") from None

    def scores(self, vid: str) -> tuple[int, ...]:
        """该变量 CPT 的定点对数表（与 table 同布局）。"""
        return self._scores[vid]

    def cardinality(self, vid: str) -> int:
        return self.variable(vid).cardinality

    def neighbors(self, vid: str) -> tuple[str, ...]:
        return self.variable(vid).parents + self.children[vid]

    def flat_index(self, vid: str, assignment: Mapping[str, int]) -> int:
        var = self.variable(vid)
        idx = 0
        for owner in (*var.parents, vid):
            card = self.cardinality(owner)
            if owner not in assignment:
                raise InstantiationError(f"实例缺少变量 {owner!r} 的取值")
            state = assignment[owner]
            if not 0 <= state < card:
                raise InstantiationError(f"变量 {owner!r} 的状态下标 {state} 越界（共 {card} 个状态）")
            idx = idx * card + state
        return idx

    def cpt_array(self, vid: str) -> np.ndarray:
        var = self.variable(vid)
        shape = [self.cardinality(p) for p in var.parents] + [var.cardinality]
        return np.asarray(self.cpt(vid).table, dtype=np.float64).reshape(shape)


def make_network(
    name: str,
    nodes: Iterable[tuple[str, Sequence[str], Sequence[str], Sequence[float]]],
) -> BayesianNetwork:
    """按 (id, states, parents, cpt) 构造网络；不做校验。"""
    variables: list[Variable] = []
    cpts: list[Cpt] = []
    for vid, states, parents, table in nodes:
        variables.append(Variable(vid, tuple(states), tuple(parents)))
        cpts.append(Cpt(vid, tuple(float(x) for x in table)))
    return BayesianNetwork(name, tuple(variables), tuple(cpts))


@dataclass(frozen=True)
class Instantiation:
    assignment: Mapping[str, int]
    log_weight: float = 0.0
    score: int = 0

    @property
    def probability(self) -> float:
        return math.exp(self.log_weight)

    def state_names(self, net: BayesianNetwork) -> dict[str, str]:
        return {vid: net.variable(vid).states[s] for vid, s in self.assignment.items()}

    @classmethod
    def from_states(cls, net: BayesianNetwork, states: Mapping[str, str]) -> Instantiation:
        assignment = {vid: net.variable(vid).state_index(name) for vid, name in states.items()}
        score = joint_score(net, assignment)
        return cls(assignment, score_to_log(score), score)


@dataclass(frozen=True)
class Violation:
    kind: str
    node: str | None
    message: str

    def __str__(self) -> str:
        return f"[{self.kind}] {self.node}: {self.message}" if self.node else f"[{self.kind}] {self.message}"


@dataclass(frozen=True)
class ValidationReport:
    problems: tuple[Violation, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.problems

    def of_kind(self, kind: str) -> list[Violation]:
        return [v for v in self.problems if v.kind == kind]

    def __str__(self) -> str:
        if self.ok:
            return "valid"
        return "\n".join(str(v) for v in self.problems)


@dataclass(frozen=True)
class NetworkStats:
    size_per_node: Mapping[str, int]
    total_size: int
    degree_per_node: Mapping[str, int]
    max_degree: int


def validate_network(net: BayesianNetwork) -> ValidationReport:
    """列出所有违反的约束；网络合法当且仅当返回空报告。从不抛异常。"""
    out: list[Violation] = []
    ids = [v.id for v in net.variables]

    seen: set[str] = set()
    for vid in ids:
        if vid in seen:
            out.append(Violation("duplicate_id", vid, "变量 id 重复"))
        seen.add(vid)

    # 1) 变量自身
    for var in net.variables:
        if not var.states:
            out.append(Violation("empty_states", var.id, "至少需要一个状态"))
        if len(set(var.states)) != len(var.states):
            out.append(Violation("duplicate_state", var.id, f"状态名重复: {list(var.states)}"))
        if len(set(var.parents)) != len(var.parents):
            out.append(Violation("duplicate_parent", var.id, f"父节点重复: {list(var.parents)}"))
        if var.id in var.parents:
            out.append(Violation("self_parent", var.id, "父节点列表包含自身"))
        for p in var.parents:
            if p not in seen:
                out.append(Violation("dangling_parent", var.id, f"未知父节点 {p!r}{suggest(p, ids)}"))

    # 2) 有向环（只看能解析的弧）
    for comp in nx.strongly_connected_components(net.graph):
        if len(comp) > 1:
            members = [vid for vid in ids if vid in comp]
            out.append(Violation("cycle", members[0], f"有向环经过 {members}"))

    # 3) CPT：一一对应、长度、取值范围、行归一
    owners: dict[str, int] = {}
    for cpt in net.cpts:
        owners[cpt.owner] = owners.get(cpt.owner, 0) + 1
        if cpt.owner not in seen:
            out.append(Violation("extra_cpt", cpt.owner, "CPT 对应的变量不存在"))
    for var in net.variables:
        count = owners.get(var.id, 0)
        if count == 0:
            out.append(Violation("missing_cpt", var.id, "缺少 CPT"))
            continue
        if count > 1:
            out.append(Violation("duplicate_cpt", var.id, f"有 {count} 个 CPT"))
        if not var.states or any(p not in net.index for p in var.parents):
            continue
        table = net.cpt(var.id).table
        expected = var.cardinality * math.prod(net.cardinality(p) for p in var.parents)
        if len(table) != expected:
            out.append(Violation("cpt_length", var.id, f"CPT 长度 {len(table)}，应为 {expected}"))
            continue
        arr = np.asarray(table, dtype=np.float64)
        if not np.all((arr >= 0.0) & (arr <= 1.0)):
            out.append(Violation("cpt_range", var.id, "CPT 取值必须在 [0, 1] 内"))
            continue
        sums = arr.reshape(-1, var.cardinality).sum(axis=1)
        bad = np.flatnonzero(np.abs(sums - 1.0) > NORMALIZATION_TOLERANCE)
        if bad.size:
            rows = ", ".join(f"row {int(r)} sums to {sums[r]:.12g}" for r in bad[:5])
            out.append(Violation("cpt_normalization", var.id, f"CPT 行未归一: {rows}"))

    return ValidationReport(tuple(out))


def is_singly_connected(net: BayesianNetwork) -> bool:
    g = net.undirected
    return g.number_of_edges() == g.number_of_nodes() - nx.number_connected_components(g)


def _assignment_of(inst: Instantiation | Mapping[str, int]) -> Mapping[str, int]:
    return inst.assignment if isinstance(inst, Instantiation) else inst


def joint_log_probability(net: BayesianNetwork, inst: Instantiation | Mapping[str, int]) -> float:
    assignment = _assignment_of(inst)
    logs: list[float] = []
    zero = False
    for var in net.variables:
        p = net.cpt(var.id).table[net.flat_index(var.id, assignment)]
        if p <= 0.0:
            zero = True
        else:
            logs.append(math.log(p))
    return -math.inf if zero else math.fsum(logs)


def joint_score(net: BayesianNetwork, inst: Instantiation | Mapping[str, int]) -> int:
    """链式法则的定点对数和；与枚举引擎逐项相同。"""
    assignment = _assignment_of(inst)
    return clamp_score(sum(net.scores(var.id)[net.flat_index(var.id, assignment)] for var in net.variables))


def network_stats(net: BayesianNetwork) -> NetworkStats:
    size: dict[str, int] = {}
    degree: dict[str, int] = {}
    for var in net.variables:
        size[var.id] = var.cardinality * math.prod(net.cardinality(p) for p in var.parents)
        degree[var.id] = len(var.parents) + len(net.children[var.id])
    return NetworkStats(
        size_per_node=size,
        total_size=sum(size.values()),
        degree_per_node=degree,
        max_degree=max(degree.values(), default=0),
    )


def subnetwork_side(net: BayesianNetwork, y: str, x: str) -> set[str]:
    """断开 y–x 弧后 y 所在的子网络。"""
    if not net.undirected.has_edge(y, x):
        raise StructureError(f"{y!r} 与 {x!r} 之间没有弧")
    g = net.undirected.copy()
    g.remove_edge(y, x)
    return set(nx.node_connected_component(g, y))


def restrict_states(net: BayesianNetwork, keep: Mapping[str, int]) -> BayesianNetwork:
    """每个 keep 中的变量只保留一个状态；引用被删状态的 CPT 切片一并删除，不重新归一。"""
    if not keep:
        return net
    for vid, state in keep.items():
        card = net.cardinality(vid)
        if not 0 <= state < card:
            raise InstantiationError(f"变量 {vid!r} 的状态下标 {state} 越界（共 {card} 个状态）")

    variables: list[Variable] = []
    cpts: list[Cpt] = []
    for var in net.variables:
        arr = net.cpt_array(var.id)
        for axis, owner in enumerate((*var.parents, var.id)):
            if owner in keep:
                arr = np.take(arr, [keep[owner]], axis=axis)
        if var.id in keep:
            var = replace(var, states=(var.states[keep[var.id]],))
        variables.append(var)
        cpts.append(Cpt(var.id, tuple(arr.ravel().tolist())))
    return BayesianNetwork(net.name, tuple(variables), tuple(cpts))


def zero_assignments(net: BayesianNetwork) -> Iterator[tuple[int, ...]]:
    """按状态下标的字典序（变量按 net.variables 的顺序）逐个给出概率为 0 的完整实例。

    深度优先，前缀只在还能补全出某个 0 因子时才往下走，所以每个输出之间的工作量与实例总数无关。
    """
    pos = net.index
    # 每个家族（父节点..., 自身）的变量位置，以及 CPT 中为 0 的下标组合
    families: list[tuple[tuple[int, ...], np.ndarray]] = []
    for var in net.variables:
        rows = np.argwhere(net.cpt_array(var.id) <= 0.0)
        if len(rows):
            families.append((tuple(pos[o] for o in (*var.parents, var.id)), rows))
    if not families:
        return

    def reachable(values: list[int], assigned: int) -> bool:
        for fam, rows in families:
            mask = np.ones(len(rows), dtype=bool)
            for col, p in enumerate(fam):
                if p < assigned:
                    mask &= rows[:, col] == values[p]
            if mask.any():
                return True
        return False

    cards = [v.cardinality for v in net.variables]
    n = len(cards)
    values = [-1] * n
    depth = 0
    while depth >= 0:
        if depth == n:
            yield tuple(values)
            depth -= 1
            continue
        values[depth] += 1
        if values[depth] >= cards[depth]:
            values[depth] = -1
            depth -= 1
        elif reachable(values, depth + 1):
            depth += 1
