"""Hybrid neural path planning for grid-world logistics."""
