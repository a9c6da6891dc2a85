"""Thin grammar vector addition systems: structure, certificates and a
witness-guided refinement pipeline for reachability."""

__version__ = "0.1.0"
