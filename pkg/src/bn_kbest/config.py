import os
from pathlib import Path

from pydantic import BaseModel


def _env(key: str, default: str | None = None) -> str | None:
    value = os.getenv(key)
    if value is None:
        return default
    value = value.strip()
    return value if value else default


def _env_int(key: str, default: int) -> int:
    return int(_env(key, str(default)) or default)


class Config(BaseModel):
    # --- 枚举相关上限 ---
    # 割集联合状态数上限：超过则 enumerate_general 直接拒绝（每个割集实例一个会话）
    CUTSET_CAP: int = _env_int("BN_KBEST_CUTSET_CAP", 4096)
    # 暴力 oracle 最多枚举的实例数
    ORACLE_CAP: int = _env_int("BN_KBEST_ORACLE_CAP", 2**20)

    # lazy_product 的 fringe 准入规则：
    # - predecessor: 所有直接前驱都已输出才加入（默认）
    # - scan: 逐个扫描 fringe 做支配检测（慢，用于对照测试）
    FRINGE_RULE: str = (_env("BN_KBEST_FRINGE_RULE", "predecessor") or "predecessor").strip().lower()

    # --- 运行环境 ---
    LOG_LEVEL: str = (_env("BN_KBEST_LOG_LEVEL", "WARNING") or "WARNING").strip().upper()
    # 惰性求值的调用链会沿消息树递归，长链网络需要更高的递归上限（只在取元素期间临时生效）
    RECURSION_LIMIT: int = _env_int("BN_KBEST_RECURSION_LIMIT", 20000)

    # 样例网络所在目录（相对路径按仓库根目录解释，见 tools/regen_fixtures.py）
    DATA_ROOT: Path = Path(_env("BN_KBEST_DATA_ROOT", "data") or "data")
    NETWORK_DIR: Path = DATA_ROOT / "networks"

    # bench 趋势比较窗口（前 N 个 vs 后 N 个实例的平均耗时）
    TREND_WINDOW: int = _env_int("BN_KBEST_TREND_WINDOW", 100)


config = Config()
