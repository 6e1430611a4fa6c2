"""Exact Fedosov star products on cotangent bundles and Lie groups."""
from .calculus_ops import Calculus, EquivalenceMap
from .fedosov_engine import FedosovSession, SessionConfig, min_jet, phase
from .geometry import ConnectionData, builtin_connection, flat_connection
from .gweyl_core import WeylElement
from .lie_group import ExpLin, LieAlgebraData, bch, builtin_algebra

__all__ = ["Calculus", "ConnectionData", "EquivalenceMap", "ExpLin", "FedosovSession",
           "LieAlgebraData", "SessionConfig", "WeylElement", "bch", "builtin_algebra",
           "builtin_connection", "flat_connection", "min_jet", "phase"]
