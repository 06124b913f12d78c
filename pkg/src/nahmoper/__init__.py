"""Desk-scale solver for the tilted-pole boundary value problem linking opers
to singular monopole-type metrics on a half line times a torus."""

__version__ = "0.1.0"
