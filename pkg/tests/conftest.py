from __future__ import annotations

import math
from pathlib import Path

import numpy as np
import pytest

from bn_kbest.model import BayesianNetwork, Cpt, Instantiation, make_network

DATA_DIR = Path(__file__).resolve().parents[1] / "data" / "networks"


def build_net_a() -> BayesianNetwork:
    return make_network(
        "NET-A",
        [
            ("A", ("yes", "no"), (), (0.2, 0.8)),
            ("B", ("wet", "dry"), ("A",), (0.9, 0.1, 0.3, 0.7)),
        ],
    )


def build_net_d() -> BayesianNetwork:
    return make_network(
        "NET-D",
        [
            ("A", ("a0", "a1"), (), (0.6, 0.4)),
            ("B", ("b0", "b1"), ("A",), (0.7, 0.3, 0.2, 0.8)),
            ("C", ("c0", "c1"), ("A",), (0.9, 0.1, 0.4, 0.6)),
            ("D", ("d0", "d1"), ("B", "C"), (0.99, 0.01, 0.8, 0.2, 0.7, 0.3, 0.05, 0.95)),
        ],
    )


def assert_same_order(got: list[Instantiation], expected, *, tol: float = 1e-9) -> None:
    """逐项比较：同样的顺序、同样的赋值、log 权重误差不超过 tol。"""
    expected = list(expected)
    assert len(got) == len(expected)
    for g, e in zip(got, expected):
        assert dict(g.assignment) == dict(e.assignment)
        assert g.score == e.score
        if e.log_weight == -math.inf:
            assert g.log_weight == -math.inf
        else:
            assert abs(g.log_weight - e.log_weight) <= tol


def with_zero_entries(net: BayesianNetwork, seed: int, rate: float = 0.3) -> BayesianNetwork:
    """随机把部分 CPT 行里一个条目的概率挪到同一行另一个条目上，造出 0 因子。"""
    rng = np.random.default_rng(seed)
    cpts = []
    for var in net.variables:
        rows = net.cpt_array(var.id).reshape(-1, var.cardinality).copy()
        for row in rows:
            if var.cardinality > 1 and rng.random() < rate:
                i, j = rng.choice(var.cardinality, size=2, replace=False)
                row[j] += row[i]
                row[i] = 0.0
        cpts.append(Cpt(var.id, tuple(rows.ravel().tolist())))
    return BayesianNetwork(net.name, net.variables, tuple(cpts))


@pytest.fixture
def net_a() -> BayesianNetwork:
    return build_net_a()


@pytest.fixture
def net_d() -> BayesianNetwork:
    return build_net_d()


@pytest.fixture
def chain3() -> BayesianNetwork:
    return make_network(
        "chain3",
        [
            ("A", ("a0", "a1"), (), (0.3, 0.7)),
            ("B", ("b0", "b1"), ("A",), (0.6, 0.4, 0.1, 0.9)),
            ("C", ("c0", "c1"), ("B",), (0.5, 0.5, 0.2, 0.8)),
        ],
    )


@pytest.fixture
def vstruct() -> BayesianNetwork:
    return make_network(
        "vstruct",
        [
            ("A", ("a0", "a1"), (), (0.4, 0.6)),
            ("B", ("b0", "b1"), (), (0.3, 0.7)),
            ("C", ("c0", "c1"), ("A", "B"), (0.9, 0.1, 0.5, 0.5, 0.6, 0.4, 0.2, 0.8)),
        ],
    )
