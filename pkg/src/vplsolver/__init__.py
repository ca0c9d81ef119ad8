"""Spectral/grid solver and verification harness for the linearized
two-species Vlasov-Poisson-Landau system on a torus and a specular channel."""

from __future__ import annotations

__version__ = "0.1.0"
