"""Epsilon-refinement studies."""
