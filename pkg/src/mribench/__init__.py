"""Desk-scale workbench for evaluating slice-based MRI encoders."""

__version__ = "0.1.0"
