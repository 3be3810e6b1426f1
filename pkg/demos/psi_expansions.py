"""Print the psi operation in exterior powers and Grothendieck operations.

Run with ``python demos/psi_expansions.py``.
"""
from shiftindex.lambda_ring import (chern_of, psi_in_exterior, psi_in_gamma, psi_series,
                                    todd_symmetric)

print("generating series of psi:", " + ".join(f"({c}) x^{k}" for k, c in enumerate(psi_series(5).coeffs)))
print()
print("psi in gamma operations through weight 3:")
print("  ", psi_in_gamma(3))
print()
for D in (3, 5, 7):
    print(f"psi(E) on spaces of dimension <= {D}:")
    print("  ", psi_in_exterior(D))
print()
for d in range(5):
    ok = (chern_of(psi_in_exterior(2 * d), d) - todd_symmetric(d)).is_zero()
    print(f"ch psi(E) = Td(E) through degree {d}: {ok}")
