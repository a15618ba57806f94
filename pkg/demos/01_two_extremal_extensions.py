"""Friedrichs and Krein-von Neumann realizations of -d^2/dx^2 on (0, 1).

The minimal operator has deficiency indices (2, 2). Its largest nonnegative
self-adjoint extension carries Dirichlet conditions; the smallest one keeps
the two-dimensional kernel of the adjoint (constants and x) and imposes
u'(0) = u'(1) = u(1) - u(0). This script prints both spectra and shows the
second never drops below the first once the kernel is removed.
"""

import numpy as np

from kreinvn.extensions import Friedrichs, Krein, build_extension, krein_bc, krein_reduced_inverse
from kreinvn.ideals import spectral_counts
from kreinvn.models import interval_laplacian

model = interval_laplacian(1024)
F = build_extension(model, Friedrichs())
K = build_extension(model, Krein())

print("Krein boundary rows acting on (u(0), u(1), u'(0), u'(1)):")
print(np.round(krein_bc(model), 6))
print(f"kernel dimension: Friedrichs {F.kernel_dim}, Krein {K.kernel_dim}\n")

mu_F = spectral_counts(model.friedrichs_green(0.0), 8, invert=True).values
mu_K = spectral_counts(krein_reduced_inverse(model), 8, invert=True).values
print(f"{'j':>2} {'mu_F':>12} {'(j pi)^2':>12} {'mu_K':>12} {'ratio':>8}")
for j, (a, b) in enumerate(zip(mu_F, mu_K), start=1):
    print(f"{j:2d} {a:12.5f} {(j * np.pi) ** 2:12.5f} {b:12.5f} {b / a:8.4f}")

# Even Krein modes cos(2 pi m x) sit at (2 pi m)^2; odd ones solve tan(k/2) = k/2.
print("\nfirst Krein eigenvalue / 4 pi^2 =", mu_K[0] / (4 * np.pi ** 2))
