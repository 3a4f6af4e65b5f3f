"""Truncated Euler-Maruyama simulation of hybrid SFDEs with infinite delay."""
__version__ = "0.1.0"
