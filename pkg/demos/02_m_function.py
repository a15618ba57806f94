"""The Donoghue M-function of the Friedrichs extension and how it moves.

M(z) is a 2 x 2 Herglotz matrix on the deficiency space at i, normalised so
that M(i) = iI. Changing the reference extension acts on M by a linear
fractional map with the angle operator between the two extensions; at z = 0
the tangent of that angle is M_F(0) itself.
"""

import numpy as np

from kreinvn.extensions import Friedrichs, Krein, build_extension
from kreinvn.models import interval_laplacian
from kreinvn.moperator import (
    alpha_of_pair,
    boundary_behavior,
    donoghue_m,
    herglotz_margin,
    lft_transform,
)

np.set_printoptions(precision=6, suppress=True)
model = interval_laplacian(1024)
F = build_extension(model, Friedrichs())
K = build_extension(model, Krein())

print("M_F(i) =\n", donoghue_m(F, None, 1j).matrix)
for z in (-1 + 0.5j, 3 + 2j, -10 - 1j):
    print(f"Herglotz margin at z = {z}: {herglotz_margin(donoghue_m(F, None, z)):+.3e}")

alpha = alpha_of_pair(F, K)
print("\ntan(alpha_FK) =\n", alpha.tan())
print("M_F(0) =\n", donoghue_m(F, None, 0.0).matrix)

pred = lft_transform(donoghue_m(F, None, -1.0), alpha).matrix
direct = donoghue_m(K, None, -1.0).matrix
print(f"\nM_K(-1) from the LFT vs direct: {np.linalg.norm(pred - direct, 2):.2e}")

# Friedrichs: (u, M(lam) u) -> -inf as lam -> -inf.  Krein: -> +inf as lam -> 0-.
for label, ext, mode in (("Friedrichs", F, "friedrichs_test"), ("Krein", K, "krein_test")):
    rep = boundary_behavior(ext, None, mode)
    print(f"{label:>10} {mode}: last values {np.round(rep['values'][-1], 1)}, diverges={rep['diverges']}")
