"""Brute-force references used to cross-check the solvers."""
