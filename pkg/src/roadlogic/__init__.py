"""Hybrid traffic perception sandbox: deterministic micro-simulation,
evidential uncertainty, behavior clustering and a commonsense rule layer
that corrects traffic-light and obstacle misclassifications."""

__version__ = "0.1.0"
