"""Sample the first four SFS generators f_0..f_3 and write them to CSV.

The curves show the plateau of f_0 around the origin and the two symmetric
humps of each f_j, j >= 1, whose supports march outward in half-steps.

    python demos/sfs_curves.py [out.csv]
"""
import sys

import numpy as np

from ratmeyer.bump import make_profile
from ratmeyer.cli import export_csv
from ratmeyer.sfs import dual_gramian_residual, eval_fj, support_fj

delta = 0.125
prof = make_profile(delta)
xi = np.linspace(-2.5, 2.5, 1001)

cols = {"xi": xi}
for j in range(4):
    cols[f"f{j}"] = eval_fj(j, prof, xi).real
    print(f"f{j}: support {[(round(a, 3), round(b, 3)) for a, b in support_fj(j, delta)]}")

out = sys.argv[1] if len(sys.argv) > 1 else "sfs_curves.csv"
export_csv(out, cols)
print(f"wrote {out}")

# the integer translates of {f_j} form an orthonormal basis: the dual
# Gramian is the identity
rep = dual_gramian_residual(prof, 12)
print(f"dual Gramian residual {rep.residual:.2e}")
