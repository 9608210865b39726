"""Equilibrium solvers, dual functionals and continuum-limit evaluators."""
