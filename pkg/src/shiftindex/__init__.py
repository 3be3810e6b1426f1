"""Index computations for shift operators on the torus.

Submodules
----------
crossed_symbol
    Symbols in the crossed product and their composition.
lambda_ring
    Exact symmetric-function calculus for the operation psi.
torus_model
    Dirac data, cat shift, test maps, lattice operators, analytic index.
chern_numeric
    Chern-Weil quadrature and the topological index formulas.
cli_reports
    Command line front end (``shiftindex`` console script).
"""
from .crossed_symbol import (CrossedSymbol, PhasePoint, PhaseSamples, ShiftMap, check_elliptic,
                             multiply, tau_component, two_term_symbol)
from .chern_numeric import (IndexReport, SphereQuadrature, TorusGrid, ch_flat_projection,
                            degree_oracle, nice_index, pairing_with_cocycle, topological_index_f)
from .torus_model import (MultiplierF, analytic_index, assemble, cat_shift, d1_margin,
                          degree_test_map, dirac_symbol, example_symbols,
                          invertibility_probe_d1, spectral_projection)

__version__ = "0.1.0"
