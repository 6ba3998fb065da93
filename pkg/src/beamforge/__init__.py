"""Gaussian-beam superposition for high-frequency wave and Schroedinger equations."""
