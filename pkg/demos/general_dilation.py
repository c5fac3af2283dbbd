"""Build wavelets for a non-diagonal rational dilation.

An expanding ellipsoid for B = A^T selects the SFS indices, the MRA is
rescaled so its lattice contains Z^2, then refined to Gamma.  The number of
wavelets is (p - q) N with N the number of scaling generators.

    python demos/general_dilation.py '[["1","1"],["-1","1"]]'
"""
import sys

from ratmeyer.cli import parse_dilation
from ratmeyer.completion import build_general
from ratmeyer.filterbank import unitarity_residual

text = sys.argv[1] if len(sys.argv) > 1 else '[["1","1"],["-1","1"]]'
A = parse_dilation(text)
ws = build_general(A, 0.02)
bank = ws.bank
print(f"A = {A.to_json()}")
print(f"p = {bank.p}, q = {bank.q}, N = {bank.N}, L = {ws.L}")
print(f"refinement residual {bank.meta['refinement_residual']:.2e}")
print(f"unitarity {unitarity_residual(bank):.2e}")
rep = bank.completion.report()
print(f"completion {rep}")
# a large continuity score flags a completion that is unitary at every node
# but jumps between neighbouring nodes; the wavelets then decay slowly
