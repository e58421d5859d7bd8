"""Trust-aware AODV and controller-based routing for vehicular ad hoc networks."""

__version__ = "0.1.0"
