"""Trace and Hilbert-Schmidt norms of the Friedrichs and reduced Krein inverses.

The Dirichlet Green operator has trace 1/6 and Hilbert-Schmidt norm 1/sqrt(90).
The reduced Krein inverse is smaller in every Schatten norm; its trace is 1/15.
Doubling the grid shows second-order convergence toward these values.
"""

import math

from kreinvn.extensions import krein_reduced_inverse
from kreinvn.models import interval_laplacian
from kreinvn.numlin import schatten_norm

print(f"{'n':>5} {'tr G':>10} {'|G|_2':>10} {'tr K^-1':>10} {'|K^-1|_2':>10}")
for n in (256, 512, 1024):
    m = interval_laplacian(n)
    G, R = m.friedrichs_green(0.0), krein_reduced_inverse(m)
    print(f"{n:5d} {schatten_norm(G, 1):10.7f} {schatten_norm(G, 2):10.7f} "
          f"{schatten_norm(R, 1):10.7f} {schatten_norm(R, 2):10.7f}")
print(f"exact {1 / 6:10.7f} {1 / math.sqrt(90):10.7f} {1 / 15:10.7f} "
      f"{math.sqrt(1 / 1440 + 1 / 5600):10.7f}")
