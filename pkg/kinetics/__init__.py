"""Cluster-size kinetics: distributions, right-hand side, time integration and equilibria."""
