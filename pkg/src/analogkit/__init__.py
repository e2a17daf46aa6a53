"""Analog circuit design automation toolkit.

Subpackages cover the stages of a specs-to-sized-netlist flow: netlist
parsing and rewriting, schematic wire tracing, a circuit knowledge store,
topology assembly, Bayesian sizing, simulator bridging, and an LLM-backed
strategy layer, glued together by a small CLI.
"""

__version__ = "0.1.0"

from . import netlist  # noqa: F401
