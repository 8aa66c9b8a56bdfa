"""暴力枚举：测试用的参照实现，和引擎共用同一个排序键。"""

from __future__ import annotations

import itertools
import math
from collections.abc import Iterator, Mapping
from dataclasses import dataclass

from .config import config
from .engine import check_evidence
from .errors import CapExceededError
from .model import BayesianNetwork, Instantiation, joint_score, score_to_log
from .streams import ranking_key


@dataclass(frozen=True)
class OracleResult:
    instances: tuple[Instantiation, ...]

    def __len__(self) -> int:
        return len(self.instances)

    def __iter__(self) -> Iterator[Instantiation]:
        return iter(self.instances)

    def __getitem__(self, i: int) -> Instantiation:
        return self.instances[i]


def brute_force_enumerate(
    net: BayesianNetwork, ev: Mapping[str, int] | None = None, *, cap: int | None = None
) -> OracleResult:
    ev = check_evidence(net, ev or {})
    ranges = [
        (ev[v.id],) if v.id in ev else range(v.cardinality)
        for v in net.variables
    ]
    size = math.prod(len(r) for r in ranges)
    limit = config.ORACLE_CAP if cap is None else cap
    if size > limit:
        raise CapExceededError("暴力枚举的实例数", size, limit)

    ids = net.ids
    scored = []
    for combo in itertools.product(*ranges):
        assignment = dict(zip(ids, combo))
        scored.append((ranking_key(joint_score(net, assignment), combo), assignment))
    scored.sort(key=lambda t: t[0])
    return OracleResult(tuple(
        Instantiation(assignment, score_to_log(-key[0]), -key[0]) for key, assignment in scored
    ))


def brute_force_mpe(net: BayesianNetwork, ev: Mapping[str, int] | None = None) -> Instantiation:
    return brute_force_enumerate(net, ev)[0]
