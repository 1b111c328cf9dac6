"""Tube constructions of small universal differentiability sets in the plane, with checks.

Typical use::

    from udset import RunConfig, build, MembershipEngine
    con = build(RunConfig())
    MembershipEngine(con, 0.5).in_T([0.0, 0.0])
"""
from .ambient import CantorSet, fat_cantor
from .analysis import NormState, corpus_function, dir_derivative, omega_envelope, p_norm
from .config import ConfigError, RunConfig
from .geometry import Wedge, box_dimension_estimate, wedge_distance
from .maximizer import Schedule, disconnected_set, uds_pipeline
from .tubes import Construction, MembershipEngine, approximating_tube, build, load, save
from .verification import SUITES, run_suite

__version__ = "0.1.0"

__all__ = [
    "CantorSet", "ConfigError", "Construction", "MembershipEngine", "NormState", "RunConfig", "SUITES",
    "Schedule", "Wedge", "approximating_tube", "box_dimension_estimate", "build", "corpus_function",
    "dir_derivative", "disconnected_set", "fat_cantor", "load", "omega_envelope", "p_norm", "run_suite",
    "save", "uds_pipeline", "wedge_distance",
]
