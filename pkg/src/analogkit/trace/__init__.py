"""Schematic-raster tracing: recover a netlist from a drawn schematic.

`raster` turns images into wire masks, `tracer` groups wire pixels
against labeled component boxes and resolves dotless crossings, and
`render` draws known netlists so the whole pipeline can be checked
against ground truth.
"""

from .raster import RasterError, WireMask, binarize, read_pgm, write_pgm
from .render import (
    LayoutError,
    RenderedSchematic,
    five_transistor_demo,
    generate_schematic,
    layout_netlist,
)
from .tracer import (
    GroupCase,
    JunctionRecord,
    LabeledBox,
    Orientation,
    PairingError,
    PinContact,
    TraceConfig,
    TraceError,
    TraceGroup,
    TraceResult,
    assign_pins,
    boxes_from_file,
    boxes_to_file,
    classify_group,
    group_components,
    order_pins,
    report_to_dict,
    resolve_intersection,
    to_global_angle,
    to_local_angle,
    trace_to_netlist,
)

__all__ = [
    "GroupCase",
    "JunctionRecord",
    "LabeledBox",
    "LayoutError",
    "Orientation",
    "PairingError",
    "PinContact",
    "RasterError",
    "RenderedSchematic",
    "TraceConfig",
    "TraceError",
    "TraceGroup",
    "TraceResult",
    "WireMask",
    "assign_pins",
    "binarize",
    "boxes_from_file",
    "boxes_to_file",
    "classify_group",
    "five_transistor_demo",
    "generate_schematic",
    "group_components",
    "layout_netlist",
    "order_pins",
    "read_pgm",
    "report_to_dict",
    "resolve_intersection",
    "to_global_angle",
    "to_local_angle",
    "trace_to_netlist",
    "write_pgm",
]
