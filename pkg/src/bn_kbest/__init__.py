"""Lazy k-best enumeration of Bayesian network instantiations."""

from loguru import logger

from .conditioning import Cutset, condition_network, enumerate_general, find_loop_cutset
from .engine import EnumerationSession, InstanceStream, apply_evidence, attach_dummy_root, enumerate_instances
from .model import BayesianNetwork, Instantiation, joint_log_probability, network_stats, validate_network
from .netio import parse_evidence, parse_network, serialize_network, write_instantiations
from .oracle import brute_force_enumerate, brute_force_mpe

# 作为库使用时默认不输出日志；CLI 会重新打开
logger.disable("bn_kbest")

__all__ = [
    "BayesianNetwork",
    "Cutset",
    "EnumerationSession",
    "InstanceStream",
    "Instantiation",
    "apply_evidence",
    "attach_dummy_root",
    "brute_force_enumerate",
    "brute_force_mpe",
    "condition_network",
    "enumerate_general",
    "enumerate_instances",
    "find_loop_cutset",
    "joint_log_probability",
    "network_stats",
    "parse_evidence",
    "parse_network",
    "serialize_network",
    "validate_network",
    "write_instantiations",
]
