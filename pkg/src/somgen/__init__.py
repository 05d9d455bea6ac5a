"""Stochastic object model ensembles and post-hoc validators."""
__version__ = "0.1.0"
