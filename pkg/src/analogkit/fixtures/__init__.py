"""Built-in circuit library: reusable parts, comparators, and testbenches.

This is a small, self-contained knowledge store used by the demos, the
CLI defaults, and the test suite.  Each entry is a complete netlist with
pin-function annotations and matched-device tie groups, so the assembly
and sizing layers can consume it without extra configuration.
"""

from .circuits import (  # noqa: F401
    bias_block,
    build_store,
    common_source_stage,
    comparator_testbenches,
    double_tail_latch,
    five_transistor_ota,
    miller_rc,
    opamp_testbenches,
    strong_arm_latch,
    telescopic_cascode_ota,
)
