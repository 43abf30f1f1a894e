"""Pure domain types for fibergof.

Dyadic tables, design matrices of the model families, and lattice moves.
"""
