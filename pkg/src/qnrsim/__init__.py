"""Minimal-change QoS-aware flow reconfiguration for SDN data-center fabrics."""

__version__ = "0.1.0"
