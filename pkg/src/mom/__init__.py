"""Semantic memory graph with operable methods, story replay, consolidation,
layered planning and a bounded attention focus."""

from .errors import MomError
from .kernel import EdgeKind, Element, ElementKind, MemoryGraph, Stats

__all__ = ["EdgeKind", "Element", "ElementKind", "MemoryGraph", "MomError", "Stats"]
__version__ = "0.1.0"
