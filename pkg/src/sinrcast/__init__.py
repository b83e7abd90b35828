"""Round-based simulator for ad hoc wireless networks under the SINR model."""

from .geometry import NetworkTopology, generate_topology, line_for_diameter
from .sinr import SinrParams, SinrEngine, resolve_round
from .coloring import ConstantProfile, derive_constants, make_profile, stabilize_probability

__version__ = "0.1.0"

__all__ = [
    "NetworkTopology", "generate_topology", "line_for_diameter", "SinrParams", "SinrEngine",
    "resolve_round", "ConstantProfile", "derive_constants", "make_profile", "stabilize_probability",
]
