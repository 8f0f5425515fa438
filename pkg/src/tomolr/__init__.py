"""Quantum state tomography by (constrained, regularized) linear regression."""
