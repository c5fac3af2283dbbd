"""Orthonormal Meyer-type wavelets for rational dilations."""
