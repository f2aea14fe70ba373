"""
Energy-Inspired Models

Approximate samplers (truncated rejection sampling, self-normalized
importance sampling, Hamiltonian importance sampling) trained as generative
models on synthetic 2-D densities, plus a zoo of multi-sample variational
bounds with closed-form answers.
"""

__version__ = "0.1.0"
