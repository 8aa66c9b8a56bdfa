"""网络 / 证据文件（TOML）的读写，以及枚举结果的输出。

网络文件::

    name = "NET-A"

    [[nodes]]
    id = "A"
    states = ["yes", "no"]
    parents = []
    cpt = [2.0000000000000001e-01, 8.0000000000000004e-01]

证据文件就是顶层的 ``id = "state"`` 键值对。
"""

from __future__ import annotations

import json
import math
import re
import tomllib
from collections.abc import Iterable
from pathlib import Path
from typing import Any, TextIO

import tomlkit
from loguru import logger
from tomlkit.items import Float, Trivia

from .errors import BnError, EvidenceError, NetworkValidationError, ParseError
from .model import BayesianNetwork, Cpt, Instantiation, Variable, suggest, validate_network

OUTPUT_FORMATS = ("records", "tsv")

# CPT 超过这个长度就按多行数组输出
_INLINE_CPT = 6

_TOML_POS = re.compile(r"\(at line (\d+), column (\d+)\)")


def _loads(text: str) -> dict[str, Any]:
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        m = _TOML_POS.search(str(e))
        location = f"line {m.group(1)}, column {m.group(2)}" if m else ""
        msg = _TOML_POS.sub("", str(e)).strip()
        raise ParseError(f"TOML 语法错误: {msg}", location=location) from None


def _str_list(value: Any, location: str) -> tuple[str, ...]:
    if not isinstance(value, list) or not all(isinstance(x, str) for x in value):
        raise ParseError("应为字符串数组", location=location)
    return tuple(value)


def _float_list(value: Any, location: str) -> tuple[float, ...]:
    if not isinstance(value, list):
        raise ParseError("应为数字数组", location=location)
    out: list[float] = []
    for i, x in enumerate(value):
        if isinstance(x, bool) or not isinstance(x, (int, float)):
            raise ParseError(f"不是数字: {x!r}", location=f"{location}[{i}]")
        out.append(float(x))
    return tuple(out)


def parse_network(text: str) -> BayesianNetwork:
    data = _loads(text)

    name = data.get("name", "")
    if not isinstance(name, str):
        raise ParseError("应为字符串", location="name")
    if "nodes" not in data:
        raise ParseError("缺少 nodes 数组", location="nodes")
    nodes = data["nodes"]
    if not isinstance(nodes, list):
        raise ParseError("应为表数组 [[nodes]]", location="nodes")

    variables: list[Variable] = []
    cpts: list[Cpt] = []
    for i, node in enumerate(nodes):
        where = f"nodes[{i}]"
        if not isinstance(node, dict):
            raise ParseError("应为表", location=where)
        unknown = set(node) - {"id", "states", "parents", "cpt"}
        if unknown:
            key = sorted(unknown)[0]
            hint = suggest(key, ("id", "states", "parents", "cpt"))
            raise ParseError(f"未知字段 {key!r}{hint}", location=where)
        vid = node.get("id")
        if not isinstance(vid, str) or not vid:
            raise ParseError("id 必须是非空字符串", location=f"{where}.id")
        if "cpt" not in node:
            raise ParseError(f"节点 {vid!r} 缺少 cpt", location=f"{where}.cpt")
        states = _str_list(node.get("states", []), f"{where}.states")
        parents = _str_list(node.get("parents", []), f"{where}.parents")
        table = _float_list(node["cpt"], f"{where}.cpt")
        variables.append(Variable(vid, states, parents))
        cpts.append(Cpt(vid, table))

    net = BayesianNetwork(name, tuple(variables), tuple(cpts))
    report = validate_network(net)
    if not report.ok:
        raise NetworkValidationError(report)
    return net


def _float_item(p: float) -> Float:
    # 17 位有效数字：parse 回来逐位相同
    return Float(p, Trivia(), f"{p:.16e}")


def serialize_network(net: BayesianNetwork) -> str:
    doc = tomlkit.document()
    doc.add("name", net.name)
    if not net.variables:
        doc.add("nodes", tomlkit.array())
        return tomlkit.dumps(doc)

    nodes = tomlkit.aot()
    for var in net.variables:
        t = tomlkit.table()
        t.add("id", var.id)
        t.add("states", list(var.states))
        t.add("parents", list(var.parents))
        cpt = tomlkit.array()
        for p in net.cpt(var.id).table:
            cpt.append(_float_item(p))
        if len(cpt) > _INLINE_CPT:
            cpt.multiline(True)
        t.add("cpt", cpt)
        nodes.append(t)
    doc.add(tomlkit.nl())
    doc.add("nodes", nodes)
    return tomlkit.dumps(doc)


def parse_evidence(text: str, net: BayesianNetwork) -> dict[str, int]:
    data = _loads(text)
    out: dict[str, int] = {}
    for vid, state in data.items():
        if not isinstance(state, str):
            raise ParseError("观测值应为状态名字符串", location=vid)
        if vid not in net.index:
            raise EvidenceError(f"证据里有未知变量 {vid!r}{suggest(vid, net.ids)}")
        var = net.variable(vid)
        if state not in var.states:
            raise EvidenceError(f"变量 {vid!r} 没有状态 {state!r}{suggest(state, var.states)}")
        out[vid] = var.states.index(state)
    return out


def _read(path: Path) -> str:
    # utf-8-sig：顺手去掉 BOM
    try:
        return Path(path).read_text(encoding="utf-8-sig")
    except UnicodeDecodeError as e:
        raise ParseError(f"不是合法的 UTF-8 文本（{e.reason}）", location=f"byte {e.start}") from None


def load_network(path: Path) -> BayesianNetwork:
    logger.debug(f"📥 读取网络 {path}")
    try:
        return parse_network(_read(path))
    except ParseError as e:
        where = f"{path}: {e.location}" if e.location else str(path)
        raise ParseError(e.detail, location=where) from None


def load_evidence(path: Path, net: BayesianNetwork) -> dict[str, int]:
    logger.debug(f"📥 读取证据 {path}")
    try:
        return parse_evidence(_read(path), net)
    except ParseError as e:
        where = f"{path}: {e.location}" if e.location else str(path)
        raise ParseError(e.detail, location=where) from None


def save_network(net: BayesianNetwork, path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(serialize_network(net), encoding="utf-8")


# ---------------------------------------------------------------------------
# 结果输出
# ---------------------------------------------------------------------------

def _record(rank: int, inst: Instantiation, net: BayesianNetwork, fmt: str) -> str:
    logp = inst.log_weight
    p = inst.probability
    names = [(vid, net.variable(vid).states[s]) for vid, s in inst.assignment.items()]
    if fmt == "tsv":
        cols = [str(rank), repr(logp), repr(p), *(f"{vid}={state}" for vid, state in names)]
        return "\t".join(cols)
    return json.dumps(
        {"rank": rank, "logp": logp, "p": p, "assignment": dict(names)},
        ensure_ascii=False,
    )


def write_instantiations(
    instances: Iterable[Instantiation],
    k: int | None,
    sink: TextIO,
    fmt: str = "records",
    *,
    net: BayesianNetwork,
    max_instances: int | None = None,
    skip_zero: bool = False,
    min_ratio: float | None = None,
) -> int:
    """按流的顺序写出至多 k 条记录（rank 从 1 开始），返回写出的条数。

    k=None 表示“全部”，此时必须给出 max_instances。
    skip_zero 跳过 log_weight=-inf 的实例；min_ratio 在实例概率低于首个实例的该比例时停止。
    """
    if fmt not in OUTPUT_FORMATS:
        raise BnError(f"未知输出格式 {fmt!r}{suggest(fmt, OUTPUT_FORMATS)}")
    if k is None:
        if max_instances is None:
            raise BnError("输出全部实例时必须给出上限 max_instances")
        limit = max_instances
    else:
        limit = k if max_instances is None else min(k, max_instances)
    if limit < 0:
        raise BnError(f"k 不能为负数: {limit}")

    threshold: float | None = None
    written = 0
    it = iter(instances)
    rank = 0
    # 先检查上限再取下一个，避免多算一个实例
    while written < limit:
        inst = next(it, None)
        if inst is None:
            break
        rank += 1
        if skip_zero and inst.log_weight == -math.inf:
            # -inf 的实例都排在最后
            break
        if min_ratio is not None:
            if threshold is None:
                threshold = inst.log_weight + math.log(min_ratio)
            elif inst.log_weight < threshold:
                break
        sink.write(_record(rank, inst, net, fmt) + "\n")
        written += 1
    return written
