"""csketch - sliding-window contact graph sketch and multilevel contact tracing.

A server-side engine that turns per-device proximity sample streams into a
compact contact graph whose edge labels are fixed-width binary vectors over
the latest incubation window, then answers direct and multilevel indirect
contact-trace queries and clusters the results into infection pathways.
"""

from csketch.core import ContactVector, TraceConfig, slot_count
from csketch.graph import ContactGraph, space_estimate
from csketch.ids import IdRegistry, VirtualIdTable, assign
from csketch.tracer import TraceEntry, TraceResult, can_transmit, trace_contacts

__version__ = "0.1.0"

__all__ = [
    "ContactGraph",
    "ContactVector",
    "IdRegistry",
    "TraceConfig",
    "TraceEntry",
    "TraceResult",
    "VirtualIdTable",
    "assign",
    "can_transmit",
    "slot_count",
    "space_estimate",
    "trace_contacts",
]
