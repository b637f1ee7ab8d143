"""Disorder statistics of free-fermion entanglement entropy.

Random Schrodinger operators ``H = -Laplacian + V`` on finite boxes of
``Z^d``, their Fermi projections, block entanglement entropies, ensemble
statistics, variance lower bounds and resolvent diagnostics.
"""

__version__ = "0.1.0"
