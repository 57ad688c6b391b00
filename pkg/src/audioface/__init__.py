"""Disentangled audio representations driving a toy talking-head generator."""

__version__ = "0.1.0"
