"""
loftsim - Low-rate flow table overflow attacks and the FloRa defense

Deterministic simulation of SDN switches with bounded flow tables, LOFT
attack planning and reconnaissance, and a gradient boosted detector that
evicts and blocks attack flows.
"""

__version__ = "0.1.0"
