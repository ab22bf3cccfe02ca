"""Spectral-Galerkin simulation of parabolic equations with state-dependent distributed delay."""

__version__ = "0.1.0"
