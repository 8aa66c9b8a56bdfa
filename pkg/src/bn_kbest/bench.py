"""随机网络生成 + 逐实例计时（gen-random / bench 子命令背后的实现）。"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import networkx as nx
import numpy as np
from loguru import logger

from .conditioning import enumerate_general
from .config import config
from .errors import BnError
from .model import BayesianNetwork, Cpt, Variable, network_stats
from .streams import recursion_headroom

# 两组随机多树参数：(节点数, 最大状态数, 最大度数, 生成实例数)
PRESETS: dict[str, tuple[int, int, int, int]] = {
    "row1": (300, 5, 5, 600),
    "row2": (500, 6, 6, 600),
}


def _check_params(n_nodes: int, max_states: int, max_degree: int) -> None:
    if n_nodes < 1:
        raise BnError(f"节点数至少为 1: {n_nodes}")
    if max_states < 2:
        raise BnError(f"最大状态数至少为 2: {max_states}")
    if max_degree < 1:
        raise BnError(f"最大度数至少为 1: {max_degree}")
    if max_degree == 1 and n_nodes > 2:
        raise BnError(f"最大度数为 1 时无法连成 {n_nodes} 个节点的树")


def _random_tree(n_nodes: int, max_degree: int, rng: np.random.Generator) -> list[tuple[int, int]]:
    """均匀挂接：第 i 个节点挂到前面度数未满的节点之一上，再随机定向。返回 (parent, child) 弧。"""
    degree = [0] * n_nodes
    arcs: list[tuple[int, int]] = []
    for i in range(1, n_nodes):
        candidates = [j for j in range(i) if degree[j] < max_degree]
        j = candidates[int(rng.integers(len(candidates)))]
        degree[i] += 1
        degree[j] += 1
        arcs.append((j, i) if rng.random() < 0.5 else (i, j))
    return arcs


def _extra_arcs(
    n_nodes: int,
    arcs: list[tuple[int, int]],
    extra_edges: int,
    max_degree: int,
    rng: np.random.Generator,
) -> list[tuple[int, int]]:
    # 按一个随机拓扑序定向，保证仍然无环；每条新弧在树上引入一个独立的无向环
    g = nx.DiGraph()
    g.add_nodes_from(range(n_nodes))
    g.add_edges_from(arcs)
    perm = rng.permutation(n_nodes).tolist()
    order = list(nx.lexicographical_topological_sort(g, key=lambda v: perm[v]))
    pos = {v: i for i, v in enumerate(order)}

    out = list(arcs)
    for _ in range(extra_edges):
        und = g.to_undirected(as_view=True)
        pairs = [
            (u, v)
            for u in range(n_nodes)
            for v in range(u + 1, n_nodes)
            if not und.has_edge(u, v) and und.degree(u) < max_degree and und.degree(v) < max_degree
        ]
        if not pairs:
            raise BnError(f"无法在度数上限 {max_degree} 内再加一条弧（已加 {len(out) - len(arcs)} 条）")
        u, v = pairs[int(rng.integers(len(pairs)))]
        arc = (u, v) if pos[u] < pos[v] else (v, u)
        g.add_edge(*arc)
        out.append(arc)
    return out


def random_network(
    n_nodes: int,
    max_states: int,
    max_degree: int,
    seed: int,
    *,
    extra_edges: int = 0,
    name: str | None = None,
) -> BayesianNetwork:
    """固定 seed 下完全确定：随机树 + extra_edges 条额外的弧，状态数在 [2, max_states] 均匀抽取，
    CPT 每一行是独立 uniform(0,1) 抽样再归一。
    """
    _check_params(n_nodes, max_states, max_degree)
    rng = np.random.default_rng(seed)
    arcs = _random_tree(n_nodes, max_degree, rng)
    if extra_edges:
        arcs = _extra_arcs(n_nodes, arcs, extra_edges, max_degree, rng)

    cards = rng.integers(2, max_states + 1, size=n_nodes).tolist()
    parents: list[list[int]] = [[] for _ in range(n_nodes)]
    for p, c in arcs:
        parents[c].append(p)

    ids = [f"V{i}" for i in range(n_nodes)]
    variables: list[Variable] = []
    cpts: list[Cpt] = []
    for i in range(n_nodes):
        ps = sorted(parents[i])
        rows = math.prod(cards[p] for p in ps)
        draws = rng.random((rows, cards[i]))
        table = draws / draws.sum(axis=1, keepdims=True)
        variables.append(Variable(ids[i], tuple(f"s{k}" for k in range(cards[i])), tuple(ids[p] for p in ps)))
        cpts.append(Cpt(ids[i], tuple(table.ravel().tolist())))

    if name is None:
        name = f"random-{n_nodes}-{max_states}-{max_degree}-seed{seed}"
        if extra_edges:
            name += f"-extra{extra_edges}"
    return BayesianNetwork(name, tuple(variables), tuple(cpts))


def random_polytree(n_nodes: int, max_states: int, max_degree: int, seed: int) -> BayesianNetwork:
    return random_network(n_nodes, max_states, max_degree, seed)


@dataclass(frozen=True)
class BenchReport:
    n_nodes: int
    max_states: int
    max_degree: int
    seed: int
    k: int
    setup_time_s: float
    # 每个实例的生成耗时（微秒），不含第一个实例（算在 setup 里）
    times_us: tuple[float, ...] = ()
    total_size: int = 0
    network_max_degree: int = 0
    extra_edges: int = 0

    @property
    def count(self) -> int:
        return len(self.times_us)

    @property
    def total_time_s(self) -> float:
        return math.fsum(self.times_us) / 1e6

    @property
    def max_us(self) -> float:
        return max(self.times_us, default=0.0)

    @property
    def min_us(self) -> float:
        return min(self.times_us, default=0.0)

    @property
    def avg_us(self) -> float:
        return math.fsum(self.times_us) / len(self.times_us) if self.times_us else 0.0

    @property
    def slope_us(self) -> float:
        """耗时对实例序号的线性回归斜率（微秒 / 实例）。"""
        if len(self.times_us) < 2:
            return 0.0
        x = np.arange(len(self.times_us), dtype=np.float64)
        return float(np.polyfit(x, np.asarray(self.times_us), 1)[0])

    def trend_ratio(self, window: int | None = None) -> float:
        """最后 window 个实例的平均耗时 / 最前 window 个的平均耗时。"""
        w = min(window or config.TREND_WINDOW, len(self.times_us) // 2)
        if w == 0:
            return 1.0
        head = np.mean(self.times_us[:w])
        tail = np.mean(self.times_us[-w:])
        return float(tail / head) if head > 0 else 1.0


def run_bench(
    n_nodes: int,
    max_states: int,
    max_degree: int,
    k: int,
    seed: int,
    *,
    repetitions: int = 1,
    extra_edges: int = 0,
) -> list[BenchReport]:
    """同一个网络重复 repetitions 次：每次新建会话，setup = 建会话 + 第一个实例。"""
    net = random_network(n_nodes, max_states, max_degree, seed, extra_edges=extra_edges)
    stats = network_stats(net)
    logger.info(f"📥 {net.name}: Size(B)={stats.total_size}, MaxDegree={stats.max_degree}")

    reports: list[BenchReport] = []
    # 计时循环整体放在 headroom 里
    with recursion_headroom():
        for rep in range(repetitions):
            t0 = time.perf_counter_ns()
            stream = enumerate_general(net)
            stream.raw.get(0)
            setup = (time.perf_counter_ns() - t0) / 1e9

            times: list[float] = []
            for i in range(1, k + 1):
                t = time.perf_counter_ns()
                item = stream.raw.get(i)
                dt = time.perf_counter_ns() - t
                if item is None:
                    break
                times.append(dt / 1000)

            report = BenchReport(
                n_nodes=n_nodes,
                max_states=max_states,
                max_degree=max_degree,
                seed=seed,
                k=k,
                setup_time_s=setup,
                times_us=tuple(times),
                total_size=stats.total_size,
                network_max_degree=stats.max_degree,
                extra_edges=extra_edges,
            )
            logger.info(f"✅ 第 {rep + 1}/{repetitions} 轮: setup {setup:.3f}s, avg {report.avg_us:.1f}µs")
            reports.append(report)
    return reports


def format_report(report: BenchReport) -> str:
    rows = [
        ("Number of Bayes net variables", f"{report.n_nodes}"),
        ("Maximum number of states", f"{report.max_states}"),
        ("Maximum degree", f"{report.max_degree} (actual {report.network_max_degree})"),
        ("Size(B)", f"{report.total_size}"),
        ("Seed", f"{report.seed}"),
        ("Setup time", f"{report.setup_time_s:.3f} s"),
        ("Number of instances generated", f"{report.count}"),
        ("Max. time", f"{report.max_us:.1f} µs"),
        ("Min. time", f"{report.min_us:.1f} µs"),
        ("Avg. time", f"{report.avg_us:.1f} µs"),
        ("Total time", f"{report.total_time_s:.3f} s"),
        ("Slope", f"{report.slope_us:.4f} µs/instance"),
        ("Trend (last/first)", f"{report.trend_ratio():.3f}"),
    ]
    if report.extra_edges:
        rows.insert(3, ("Extra edges", f"{report.extra_edges}"))
    width = max(len(label) for label, _ in rows)
    return "\n".join(f"{label:<{width}}  {value}" for label, value in rows)
