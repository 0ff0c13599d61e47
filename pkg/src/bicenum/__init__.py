"""Cluster enumeration with Bayesian information criteria."""

__version__ = "0.1.0"
