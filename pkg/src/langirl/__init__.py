"""Reward reconstruction from passively observed gradients."""

__version__ = "0.1.0"
