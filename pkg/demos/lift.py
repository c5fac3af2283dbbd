"""Lift the 3/2 system to the plane.

The lifted dilation permutes coordinates and carries the rational factor
on one axis only, so the low-pass filter of the lift is the 1-D filter
read along the last frequency coordinate.
"""
from ratmeyer.completion import lift_matrix, lift_to_nd
from ratmeyer.mra import orthonormality_residual
from ratmeyer.ratlat import group_indices
from ratmeyer.verify import wavelet_gram

A = lift_matrix(3, 2, 2)
gi = group_indices(A)
print(f"A = {A.to_json()}, p = {gi.p}, q = {gi.q}")

ws = lift_to_nd(3, 2, 2, shape=(16, 16))
print(f"vol(Gamma) = {float(ws.bank.spec.lattice.volume)}")
print(f"orthonormality residual {orthonormality_residual(ws.bank.spec, 32):.2e}")
print(f"lifted low-pass deviation {ws.meta['lift_lowpass_deviation']:.2e}")
print(f"wavelets L = {ws.L}, bank unitarity {ws.meta['unitarity']:.2e}")
print(f"Gram dev at scale 0: {wavelet_gram(ws, (0, 0), 2).max_dev:.2e}")
