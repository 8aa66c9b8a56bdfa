from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

from loguru import logger

from .bench import PRESETS, format_report, random_network, run_bench
from .conditioning import enumerate_general, find_loop_cutset
from .config import config
from .errors import BnError, CapExceededError, NetworkValidationError, ParseError
from .model import is_singly_connected, network_stats
from .netio import OUTPUT_FORMATS, load_evidence, load_network, serialize_network, write_instantiations
from .streams import recursion_headroom

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_INVALID = 3
EXIT_CAP = 4


def _setup_logging(verbose: bool) -> None:
    logger.remove()
    logger.add(sys.stderr, level="DEBUG" if verbose else config.LOG_LEVEL, format="{level: <8} | {message}")
    logger.enable("bn_kbest")


def cmd_enumerate(args: argparse.Namespace) -> int:
    net = load_network(args.network)
    ev = load_evidence(args.evidence, net) if args.evidence else {}
    stream = enumerate_general(net, ev, cutset_cap=args.cutset_cap)

    first = stream.get(0)
    if ev and first is not None and first.log_weight == -math.inf:
        logger.warning("⚠️ P(evidence)=0：所有实例概率都为 0，后验无定义（仍按决胜顺序输出）")

    k = None if args.all else args.top_k
    count = write_instantiations(
        stream,
        k,
        sys.stdout,
        args.format,
        net=net,
        max_instances=args.max_instances if args.all else None,
        skip_zero=args.skip_zero,
        min_ratio=args.min_ratio,
    )
    if args.all:
        if count == args.max_instances and stream.get(count) is not None:
            logger.warning(f"⚠️ 只输出了前 {count} 个实例（--max-instances），流还没有结束")
    elif count < args.top_k and args.min_ratio is None:
        logger.warning(f"⚠️ 流提前结束：请求 {args.top_k} 个，只有 {count} 个")
    return EXIT_OK


def cmd_validate(args: argparse.Namespace) -> int:
    try:
        net = load_network(args.network)
    except NetworkValidationError as e:
        print("invalid")
        for v in e.report.problems:
            print(f"- {v}")
        return EXIT_INVALID

    stats = network_stats(net)
    single = is_singly_connected(net)
    shape = "singly connected" if single else "multiply connected"
    print(f"valid, {shape}, Size(B)={stats.total_size}, MaxDegree={stats.max_degree}")
    if not single:
        cutset = find_loop_cutset(net)
        print(f"cutset={list(cutset.members)}, cutset joint_size={cutset.joint_size}")
    if args.table:
        width = max((len(vid) for vid in net.ids), default=2)
        print(f"{'id':<{width}}  {'Size':>8}  {'Degree':>6}")
        for vid in net.ids:
            print(f"{vid:<{width}}  {stats.size_per_node[vid]:>8}  {stats.degree_per_node[vid]:>6}")
    return EXIT_OK


def cmd_gen_random(args: argparse.Namespace) -> int:
    net = random_network(
        args.nodes, args.max_states, args.max_degree, args.seed, extra_edges=args.extra_edges
    )
    text = serialize_network(net)
    if args.output:
        args.output.parent.mkdir(parents=True, exist_ok=True)
        args.output.write_text(text, encoding="utf-8")
        logger.info(f"✅ 已写入 {args.output}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_bench(args: argparse.Namespace) -> int:
    nodes, max_states, max_degree, k = args.nodes, args.max_states, args.max_degree, args.top_k
    if args.preset:
        nodes, max_states, max_degree, k = PRESETS[args.preset]
    reports = run_bench(
        nodes,
        max_states,
        max_degree,
        k,
        args.seed,
        repetitions=args.repetitions,
        extra_edges=args.extra_edges,
    )
    for i, report in enumerate(reports):
        if len(reports) > 1:
            print(f"# repetition {i + 1}")
        print(format_report(report))
    return EXIT_OK


def _positive(value: str) -> int:
    n = int(value)
    if n < 0:
        raise argparse.ArgumentTypeError(f"不能为负数: {n}")
    return n


def _ratio(value: str) -> float:
    r = float(value)
    if not 0.0 < r <= 1.0:
        raise argparse.ArgumentTypeError(f"应在 (0, 1] 内: {r}")
    return r


def _add_generator_args(p: argparse.ArgumentParser, *, nodes: int = 300) -> None:
    p.add_argument("--nodes", type=int, default=nodes, help=f"节点数 (default: {nodes})")
    p.add_argument("--max-states", type=int, default=5, help="每个节点最多状态数 (default: 5)")
    p.add_argument("--max-degree", type=int, default=5, help="最大度数 (default: 5)")
    p.add_argument("--seed", type=int, default=0, help="随机种子 (default: 0)")
    p.add_argument("--extra-edges", type=_positive, default=0, help="在多树上额外加的弧数 (default: 0)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bn-kbest",
        description="Enumerate Bayesian network instantiations in decreasing order of probability",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="DEBUG 级别日志")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("enumerate", help="按概率递减输出实例")
    p.add_argument("network", type=Path)
    p.add_argument("--evidence", type=Path, help="证据文件（TOML: id = \"state\"）")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--top-k", type=_positive, default=1, help="输出前 N 个 (default: 1)")
    group.add_argument("--all", action="store_true", help="输出全部（必须配合 --max-instances）")
    p.add_argument("--max-instances", type=_positive, help="--all 时的上限")
    p.add_argument("--skip-zero", action="store_true", help="不输出概率为 0 的实例")
    p.add_argument("--format", choices=OUTPUT_FORMATS, default="records")
    p.add_argument("--cutset-cap", type=_positive, default=config.CUTSET_CAP,
                   help=f"割集联合状态数上限 (default: {config.CUTSET_CAP})")
    p.add_argument("--min-ratio", type=_ratio,
                   help="概率低于第一个实例的该比例时停止（鉴别诊断）")
    p.set_defaults(func=cmd_enumerate)

    p = sub.add_parser("validate", help="校验网络并给出统计量")
    p.add_argument("network", type=Path)
    p.add_argument("--verbose", dest="table", action="store_true", help="逐节点输出 Size / Degree")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("gen-random", help="生成随机多树网络")
    _add_generator_args(p)
    p.add_argument("--output", type=Path, help="输出文件 (default: stdout)")
    p.set_defaults(func=cmd_gen_random)

    p = sub.add_parser("bench", help="随机多树上的逐实例计时")
    _add_generator_args(p)
    p.add_argument("--top-k", type=_positive, default=600, help="计时的实例数 (default: 600)")
    p.add_argument("--repetitions", type=int, default=1, help="重复次数 (default: 1)")
    p.add_argument("--preset", choices=sorted(PRESETS), help="使用预设参数（覆盖 --nodes 等）")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "enumerate" and args.all and args.max_instances is None:
        parser.error("--all 必须配合 --max-instances 使用")
    _setup_logging(args.verbose)
    try:
        with recursion_headroom():
            return args.func(args)
    except (ParseError, OSError) as e:
        logger.error(f"❌ {e}")
        return EXIT_PARSE
    except CapExceededError as e:
        logger.error(f"❌ {e}")
        return EXIT_CAP
    except BnError as e:
        logger.error(f"❌ {e}")
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
