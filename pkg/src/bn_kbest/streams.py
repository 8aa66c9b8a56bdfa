"""惰性有序流：缓存前缀 + 挂起的生成器，以及平移、合并、乘积三个组合子。

所有流按 (score 降序, key 升序) 排列，key 是 payload 中各变量的状态下标按变量序排成的元组。
"""

from __future__ import annotations

import heapq
import math
import sys
from collections.abc import Iterable, Iterator, Sequence
from contextlib import contextmanager
from typing import NamedTuple, Union

from .config import config
from .errors import BnError, StructureError
from .model import clamp_score, probability_score, score_to_log


class Assign(NamedTuple):
    rank: int
    state: int


# 持久化 payload：叶子是 Assign，组合就是子 payload 的元组；只在最终输出时展开。
Payload = Union[Assign, tuple]


def flatten(payload: Payload) -> dict[int, int]:
    out: dict[int, int] = {}
    stack: list = [payload]
    while stack:
        p = stack.pop()
        if type(p) is Assign:
            out[p.rank] = p.state
        elif p is not None:
            stack.extend(p)
    return out


def ranking_key(score: int, key: tuple[int, ...]) -> tuple[int, tuple[int, ...]]:
    """流、oracle 共用的排序键：权重大的在前，权重相同按 key 字典序。"""
    return (-score, key)


class WeightedItem:
    __slots__ = ("score", "payload", "_key")

    def __init__(self, score: int, payload: Payload) -> None:
        self.score = score
        self.payload = payload
        self._key: tuple[int, ...] | None = None

    @classmethod
    def of(cls, probability: float, payload: Payload) -> WeightedItem:
        return cls(probability_score(probability), payload)

    @property
    def log_weight(self) -> float:
        return score_to_log(self.score)

    @property
    def probability(self) -> float:
        return math.exp(self.log_weight)

    @property
    def assignment(self) -> dict[int, int]:
        return flatten(self.payload)

    @property
    def key(self) -> tuple[int, ...]:
        # 只有权重打平时才会用到，按需计算并缓存
        if self._key is None:
            flat = flatten(self.payload)
            self._key = tuple(flat[r] for r in sorted(flat))
        return self._key

    def __repr__(self) -> str:
        return f"WeightedItem(p={self.probability:.6g}, {self.assignment})"


class _Tie:
    """堆里的次级比较：权重相等时才会被调用。"""

    __slots__ = ("item",)

    def __init__(self, item: WeightedItem) -> None:
        self.item = item

    def __eq__(self, other: object) -> bool:
        return isinstance(other, _Tie) and self.item.key == other.item.key

    def __lt__(self, other: _Tie) -> bool:
        return self.item.key < other.item.key


class ForceCounter:
    """全局计数：任何流的缓存每追加一个元素就 +1。"""

    def __init__(self) -> None:
        self.count = 0

    def reset(self) -> int:
        value, self.count = self.count, 0
        return value


force_counter = ForceCounter()


@contextmanager
def recursion_headroom(limit: int | None = None) -> Iterator[None]:
    """按需求值沿网络逐层递归：深网络上临时把递归上限提到 config.RECURSION_LIMIT，退出时恢复。"""
    target = config.RECURSION_LIMIT if limit is None else limit
    old = sys.getrecursionlimit()
    if old >= target:
        yield
        return
    sys.setrecursionlimit(target)
    try:
        yield
    finally:
        sys.setrecursionlimit(old)


class RankedStream:
    __slots__ = ("nodes", "_cache", "_source", "_done", "fringe")

    def __init__(self, source: Iterator[WeightedItem] | None, nodes: frozenset[int] = frozenset()) -> None:
        self.nodes = nodes
        self._cache: list[WeightedItem] = []
        self._source = source
        self._done = source is None
        self.fringe: Fringe | None = None

    @classmethod
    def empty(cls, nodes: frozenset[int] = frozenset()) -> RankedStream:
        return cls(None, nodes)

    @classmethod
    def singleton(cls, payload: Payload, score: int = 0, nodes: frozenset[int] = frozenset()) -> RankedStream:
        return cls(iter((WeightedItem(score, payload),)), nodes)

    @classmethod
    def from_items(cls, items: Iterable[WeightedItem], nodes: frozenset[int] | None = None) -> RankedStream:
        """急切版本：排好序的列表包装成流（测试和小规模输入用）。"""
        ordered = sorted(items, key=lambda it: ranking_key(it.score, it.key))
        if nodes is None:
            nodes = frozenset(flatten(ordered[0].payload)) if ordered else frozenset()
        return cls(iter(ordered), nodes)

    def get(self, index: int) -> WeightedItem | None:
        cache = self._cache
        if index < len(cache):
            return cache[index]
        while len(cache) <= index:
            if self._done:
                return None
            try:
                item = next(self._source)  # type: ignore[arg-type]
            except StopIteration:
                # 耗尽是粘滞的：之后的请求都直接返回 None
                self._done = True
                self._source = None
                return None
            cache.append(item)
            force_counter.count += 1
        return cache[index]

    @property
    def forced(self) -> int:
        return len(self._cache)

    @property
    def cached(self) -> tuple[WeightedItem, ...]:
        return tuple(self._cache)

    @property
    def exhausted(self) -> bool:
        return self._done

    def cursor(self) -> Cursor:
        return Cursor(self)

    def __iter__(self) -> Iterator[WeightedItem]:
        return self.cursor()

    def take(self, k: int) -> list[WeightedItem]:
        out: list[WeightedItem] = []
        for i in range(k):
            item = self.get(i)
            if item is None:
                break
            out.append(item)
        return out

    def force_all(self, limit: int | None = None) -> list[WeightedItem]:
        i = 0
        while limit is None or i < limit:
            if self.get(i) is None:
                break
            i += 1
        return list(self._cache[:i])


class Cursor:
    """同一个流可以有多个互不影响的读者。"""

    __slots__ = ("stream", "position")

    def __init__(self, stream: RankedStream, position: int = 0) -> None:
        self.stream = stream
        self.position = position

    def peek(self) -> WeightedItem | None:
        return self.stream.get(self.position)

    def next(self) -> WeightedItem | None:
        item = self.stream.get(self.position)
        if item is not None:
            self.position += 1
        return item

    def __iter__(self) -> Cursor:
        return self

    def __next__(self) -> WeightedItem:
        item = self.next()
        if item is None:
            raise StopIteration
        return item


def scale_stream(k: int, s: RankedStream) -> RankedStream:
    """每个元素的 score 加上常数 k（即概率乘以 e^{k/2^40}）。"""
    if k == 0:
        return s

    def _items() -> Iterator[WeightedItem]:
        for item in s.cursor():
            out = WeightedItem(clamp_score(item.score + k), item.payload)
            out._key = item._key
            yield out

    return RankedStream(_items(), s.nodes)


def merge_streams(ll: Sequence[RankedStream], nodes: frozenset[int] | None = None) -> RankedStream:
    """合并：每次取各参数当前头部中最大的那个，只推进胜出的流。"""
    if nodes is None:
        nodes = ll[0].nodes if ll else frozenset()
    for s in ll:
        if s.nodes is not nodes and s.nodes != nodes:
            raise StructureError(f"Merge 的参数覆盖的变量集合不一致: {sorted(s.nodes)} vs {sorted(nodes)}")
    if not ll:
        return RankedStream.empty(nodes)
    if len(ll) == 1:
        return ll[0]

    def _items() -> Iterator[WeightedItem]:
        cursors = [s.cursor() for s in ll]
        heap = []
        for pos, cur in enumerate(cursors):
            head = cur.next()
            if head is not None:
                heap.append((-head.score, _Tie(head), pos, head))
        heapq.heapify(heap)
        while heap:
            _, _, pos, item = heap[0]
            yield item
            # 胜出的流等到下一次请求时才推进
            nxt = cursors[pos].next()
            if nxt is None:
                heapq.heappop(heap)
            else:
                heapq.heapreplace(heap, (-nxt.score, _Tie(nxt), pos, nxt))

    return RankedStream(_items(), nodes)


class FringeElement(NamedTuple):
    index: tuple[int, ...]
    log_weight: float


class Fringe:
    """乘积流的 fringe：隐式 n 维乘积矩阵中尚未输出、且不被其他剩余元素支配的下标。

    rule="predecessor"：邻居的所有直接前驱（某一维减一）都已输出才加入；
    rule="scan"：逐个检查 fringe 中是否有元素支配它。两者输出序列相同。
    """

    def __init__(
        self,
        args: Sequence[RankedStream],
        *,
        offset: int = 0,
        stamp: Payload | None = None,
        rule: str | None = None,
    ) -> None:
        self.args = list(args)
        self.offset = offset
        self.stamp = stamp
        self.rule = rule or config.FRINGE_RULE
        if self.rule not in {"predecessor", "scan"}:
            raise BnError(f"未知的 fringe 规则 {self.rule!r}")
        self._heap: list = []
        self._emitted: set[tuple[int, ...]] = set()
        self.emitted_count = 0

    def __len__(self) -> int:
        return len(self._heap)

    @property
    def size(self) -> int:
        return len(self._heap)

    def elements(self) -> list[FringeElement]:
        return sorted(FringeElement(entry[2], entry[3].log_weight) for entry in self._heap)

    def _make(self, index: tuple[int, ...]) -> WeightedItem | None:
        score = self.offset
        parts: list[Payload] = [] if self.stamp is None else [self.stamp]
        for arg, i in zip(self.args, index):
            comp = arg.get(i)
            if comp is None:
                return None
            score += comp.score
            parts.append(comp.payload)
        return WeightedItem(clamp_score(score), tuple(parts))

    def _push(self, index: tuple[int, ...], item: WeightedItem) -> None:
        entry = (-item.score, _Tie(item), index, item)
        if self.rule == "scan":
            self._heap.append(entry)
        else:
            heapq.heappush(self._heap, entry)

    def seed(self) -> bool:
        origin = (0,) * len(self.args)
        item = self._make(origin)
        if item is None:
            return False
        self._push(origin, item)
        return True

    def pop(self) -> tuple[tuple[int, ...], WeightedItem]:
        """取出当前最大的元素（权重最大；打平时 key 小的在前，再按下标字典序）。"""
        if self.rule == "scan":
            best = min(range(len(self._heap)), key=lambda i: self._heap[i][:3])
            entry = self._heap.pop(best)
        else:
            entry = heapq.heappop(self._heap)
        index, item = entry[2], entry[3]
        self._emitted.add(index)
        self.emitted_count += 1
        return index, item

    def _admissible(self, nb: tuple[int, ...], dim: int) -> bool:
        if self.rule == "scan":
            return not any(all(a <= b for a, b in zip(entry[2], nb)) for entry in self._heap)
        for j, v in enumerate(nb):
            if j != dim and v > 0:
                if nb[:j] + (v - 1,) + nb[j + 1:] not in self._emitted:
                    return False
        return True

    def expand(self, index: tuple[int, ...]) -> None:
        for dim in range(len(index)):
            nb = index[:dim] + (index[dim] + 1,) + index[dim + 1:]
            if not self._admissible(nb, dim):
                continue
            # 可能唤醒第 dim 个参数流去计算下一个元素
            item = self._make(nb)
            if item is not None:
                self._push(nb, item)

    def update_fringe(self) -> WeightedItem | None:
        """取出最大元素并立刻把它的被支配邻居补进 fringe。F 为空时返回 None（流结束）。"""
        if not self._heap:
            return None
        index, item = self.pop()
        self.expand(index)
        return item


def _product_items(fringe: Fringe) -> Iterator[WeightedItem]:
    if not fringe.seed():
        return
    pending: tuple[int, ...] | None = None
    while True:
        # 上一次输出元素的邻居推迟到本次请求时才展开
        if pending is not None:
            fringe.expand(pending)
        if not fringe:
            return
        pending, item = fringe.pop()
        yield item


def lazy_product(
    args: Sequence[RankedStream],
    *,
    offset: int = 0,
    stamp: Assign | None = None,
    nodes: frozenset[int] | None = None,
    rule: str | None = None,
) -> RankedStream:
    """args 的惰性乘积，可附带常数 offset（相当于乘积后再平移）和一个固定的叶子 stamp。"""
    if not args:
        raise BnError("lazy_product 至少需要一个参数流")
    extra = 0 if stamp is None else 1
    if nodes is None:
        nodes = frozenset().union(*(a.nodes for a in args))
        if stamp is not None:
            nodes = nodes | {stamp.rank}
    if sum(len(a.nodes) for a in args) + extra != len(nodes):
        raise StructureError("lazy_product 的参数覆盖的变量集合有重叠")
    fringe = Fringe(args, offset=offset, stamp=stamp, rule=rule)
    stream = RankedStream(_product_items(fringe), nodes)
    stream.fringe = fringe
    return stream
