"""Spatial random networks, power-weighted edge functionals and their upper tails."""
