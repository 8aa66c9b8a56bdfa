from __future__ import annotations

import argparse
import sys
import tomllib
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "src"))

from bn_kbest.bench import PRESETS, random_network  # noqa: E402
from bn_kbest.config import config  # noqa: E402
from bn_kbest.errors import BnError  # noqa: E402
from bn_kbest.netio import load_network, save_network, serialize_network  # noqa: E402


def _is_network_file(p: Path) -> bool:
    # 证据文件只有顶层键值对，没有 nodes
    try:
        return "nodes" in tomllib.loads(p.read_text(encoding="utf-8-sig"))
    except tomllib.TOMLDecodeError:
        return True


def regen(*, root: Path, check: bool) -> tuple[int, int, list[str]]:
    """把 root 下的网络文件重写成规范格式（%.16e 浮点、长 CPT 多行）。返回 (改写数, 未变数, 问题)。"""
    rewritten = 0
    unchanged = 0
    problems: list[str] = []

    for path in sorted(root.glob("*.toml")):
        if not _is_network_file(path):
            continue
        try:
            net = load_network(path)
        except BnError as e:
            problems.append(f"{path.name}: {e}")
            continue

        text = serialize_network(net)
        if path.read_text(encoding="utf-8-sig") == text:
            unchanged += 1
            continue
        rewritten += 1
        if check:
            problems.append(f"{path.name}: 不是规范格式")
        else:
            path.write_text(text, encoding="utf-8")

    return rewritten, unchanged, problems


def default_root() -> Path:
    root = config.NETWORK_DIR
    return root if root.is_absolute() else ROOT / root


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Rewrite the sample networks under data/networks in canonical form")
    parser.add_argument(
        "--root",
        type=Path,
        default=default_root(),
        help="network directory (default: BN_KBEST_DATA_ROOT/networks)",
    )
    parser.add_argument(
        "--check",
        action="store_true",
        help="only report files that are not canonical; exit 1 if any",
    )
    parser.add_argument(
        "--with-presets",
        action="store_true",
        help="also write the benchmark preset networks (seed 0) as preset_<name>.toml",
    )
    return parser


def main(argv: list[str] | None = None) -> None:
    args = build_parser().parse_args(argv)

    if args.with_presets and not args.check:
        for name, (n, s, d, _) in sorted(PRESETS.items()):
            save_network(random_network(n, s, d, 0), args.root / f"preset_{name}.toml")

    rewritten, unchanged, problems = regen(root=args.root, check=args.check)
    verb = "need rewrite" if args.check else "rewritten"
    print(f"✅ {verb}: {rewritten}, unchanged: {unchanged}")
    if problems:
        print("\n⚠️ warnings:")
        for line in problems:
            print(f"- {line}")
    if args.check and problems:
        raise SystemExit(1)


if __name__ == "__main__":
    main()
