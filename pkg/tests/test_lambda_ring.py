import json
import time
from fractions import Fraction
from itertools import combinations

import pytest
import sympy
from hypothesis import given, settings, strategies as st

from shiftindex.lambda_ring import (QN, FormalSeries, LambdaExpr, RationalPolyInN, SymmPoly,
                                    binom_n, chern_of, psi_closed_form, gamma_expand,
                                    lambda_from_terms, log_ratio_series, multiplicative_op,
                                    newton_convert, psi_gamma_reference, psi_in_exterior,
                                    psi_in_gamma, psi_series, todd_series, todd_symmetric,
                                    verify_psi_multiplicative)

F = Fraction
n = QN.n()


def sympy_coeffs(expr, var, order):
    ser = sympy.series(expr, var, 0, order + 1).removeO()
    return [sympy.Rational(ser.coeff(var, k)) for k in range(order + 1)]


def as_fraction(r):
    return Fraction(int(r.p), int(r.q))


# --- series ------------------------------------------------------------------------------


def test_psi_series_closed_form_to_fifty():
    t = time.perf_counter()
    ser = psi_series(50)
    assert time.perf_counter() - t < 1.0
    assert ser[0] == 1
    for k in range(1, 51):
        assert ser[k] == F((-1) ** (k + 1), k * (k + 1))
    assert ser[1] == F(1, 2) and ser[2] == F(-1, 6)


def test_psi_series_against_sympy():
    x = sympy.symbols("x")
    ref = sympy_coeffs((1 + x) * sympy.log(1 + x) / x, x, 12)
    assert [as_fraction(c) for c in ref] == list(psi_series(12).coeffs)


def test_todd_series_against_sympy():
    u = sympy.symbols("u")
    ref = sympy_coeffs(u / (1 - sympy.exp(-u)), u, 12)
    got = todd_series(12)
    assert [as_fraction(c) for c in ref] == list(got.coeffs)
    assert (got[0], got[1], got[2], got[3], got[4]) == (1, F(1, 2), F(1, 12), 0, F(-1, 720))


def test_series_log_and_reciprocal():
    x = sympy.symbols("x")
    f = psi_series(10)
    ref = sympy_coeffs(sympy.log((1 + x) * sympy.log(1 + x) / x), x, 10)
    assert [as_fraction(c) for c in ref] == list(f.log().coeffs)
    one = f * f.reciprocal()
    assert one.coeffs == (1,) + (0,) * 10
    with pytest.raises(ValueError):
        psi_series(-1)


# --- Newton identities -------------------------------------------------------------------


def p(i, d=10):
    return SymmPoly.gen("p", i, d)


def s(i, d=10):
    return SymmPoly.gen("s", i, d)


def test_newton_examples():
    assert newton_convert(p(1)) == s(1)
    assert newton_convert(p(2)) == s(1) * s(1) - s(2) * 2
    assert newton_convert(p(3)) == s(1) * s(1) * s(1) - s(1) * s(2) * 3 + s(3) * 3


def partitions(total, largest=None):
    largest = total if largest is None else largest
    if total == 0:
        yield ()
        return
    for k in range(min(total, largest), 0, -1):
        for rest in partitions(total - k, k):
            yield (k,) + rest


def test_newton_roundtrip_all_monomials_to_degree_ten():
    count = 0
    for w in range(0, 11):
        for part in partitions(w):
            mono = SymmPoly({tuple(("p", k) for k in part): QN.const(1)}, 10)
            there = newton_convert(mono)
            assert there.names() <= {"s"}
            assert newton_convert(there, inverse=True) == mono
            mono_s = mono.rename("p", "s")
            assert newton_convert(newton_convert(mono_s, inverse=True)) == mono_s
            count += 1
    assert count == 139  # number of partitions of 0..10


def test_newton_against_numeric_roots():
    roots = [F(1, 2), F(-3), F(2, 7), F(5)]
    e = [F(1)] + [sum(_prod(c) for c in combinations(roots, k)) for k in range(1, 5)]
    values = {("s", j): (e[j] if j < len(e) else F(0)) for j in range(1, 9)}
    for k in range(1, 8):
        poly = newton_convert(SymmPoly.gen("p", k, 8))
        assert poly.evaluate(values) == sum(r ** k for r in roots)


def _prod(vals):
    out = F(1)
    for v in vals:
        out *= v
    return out


# --- multiplicative sequences ------------------------------------------------------------


def brute_force_symmetric(f: FormalSeries, d: int):
    """prod_{j<=d} f(x_j) truncated at degree d, by expanding in root variables (sympy)."""
    xs = sympy.symbols(f"x1:{d + 1}")
    t = sympy.symbols("t")
    fx = [sum(sympy.Rational(f[k].numerator, f[k].denominator) * (t * x) ** k for k in range(d + 1))
          for x in xs]
    prod = sympy.expand(sympy.Mul(*fx))
    trunc = sum(prod.coeff(t, k) for k in range(d + 1))
    return xs, sympy.expand(trunc)


def symm_to_roots(poly: SymmPoly, xs):
    e = {k: sympy.Add(*[sympy.Mul(*c) for c in combinations(xs, k)]) for k in range(1, len(xs) + 1)}
    out = 0
    for mono, c in poly.terms.items():
        coef = c(0)
        term = sympy.Rational(coef.numerator, coef.denominator)
        for (name, k) in mono:
            assert name == "s"
            term *= e[k]
        out += term
    return sympy.expand(out)


@pytest.mark.parametrize("series", ["psi", "todd", "log_ratio"])
def test_multiplicative_op_against_root_variables(series):
    d = 5
    f = {"psi": psi_series, "todd": todd_series, "log_ratio": log_ratio_series}[series](d)
    xs, ref = brute_force_symmetric(f, d)
    got = symm_to_roots(multiplicative_op(f, d), xs)
    assert sympy.expand(got - ref) == 0


def test_multiplicative_op_simple_cases():
    d = 6
    lin = multiplicative_op(FormalSeries([1, 1], d), d)
    assert lin == SymmPoly.one(d) + sum((s(k, d) for k in range(2, d + 1)), s(1, d))
    assert multiplicative_op(FormalSeries([1], d), d) == SymmPoly.one(d)
    with pytest.raises(ValueError):
        multiplicative_op(FormalSeries([2, 1], d), d)


def test_log_factor_expansion():
    d = 3
    got = multiplicative_op(log_ratio_series(d), d)
    s1, s2, s3 = s(1, d), s(2, d), s(3, d)
    ref = (SymmPoly.one(d) - s1 * F(1, 2) + (s1 * s1 * 4 - s2 * 5) * F(1, 12)
           + (s1 * s1 * s1 * (-6) + s1 * s2 * 14 - s3 * 9) * F(1, 24))
    assert got == ref


# --- gamma operations and psi ------------------------------------------------------------


def test_gamma_examples():
    g = gamma_expand(3)
    L1, L2 = LambdaExpr.exterior(1), LambdaExpr.exterior(2)
    assert g[0] == LambdaExpr.one()
    assert g[1] == L1 - LambdaExpr({(): n})
    assert g[2] == L1 + L2 - L1 * n + LambdaExpr({(): n * (n - 1) * F(1, 2)})


def test_gamma_vanishes_on_trivial_bundle():
    for j, gj in enumerate(gamma_expand(8)):
        assert gj.trivial_value() == (1 if j == 0 else 0)


def test_psi_in_gamma_reference():
    ref = psi_gamma_reference()
    got = psi_in_gamma(3)
    assert got == ref
    assert psi_in_gamma(5).degree_part(1) == SymmPoly.gen("g", 1, 5, F(1, 2))
    assert psi_in_gamma(0) == SymmPoly.one(0)


def test_psi_in_exterior_closed_forms():
    E = LambdaExpr.exterior(1)
    assert psi_in_exterior(3) == LambdaExpr.one() + (E - LambdaExpr({(): n})) * F(1, 2)
    five = psi_in_exterior(5)
    assert five == psi_closed_form(5)
    assert five.terms[()] == QN([24, -19, 3]) * F(1, 24)
    assert five.terms[(1,)] == QN([13, -3]) * F(1, 12)
    assert five.terms[(1, 1)] == QN.const(F(-1, 6))
    assert five.terms[(2,)] == QN.const(F(7, 12))
    assert str(five.terms[()]) == "(3n^2 - 19n + 24)/24"


@pytest.mark.parametrize("D", range(0, 11))
def test_psi_of_trivial_bundle_is_one(D):
    assert psi_in_exterior(D).trivial_value() == 1


def test_terms_json_roundtrip():
    expr = psi_in_exterior(7)
    terms = expr.to_terms()
    again = lambda_from_terms(json.loads(json.dumps(terms)))
    assert again == expr
    names = {t["monomial"] for t in psi_closed_form(5).to_terms()}
    assert names == {"1", "E", "Λ^2E", "E⊗E"}


def test_all_coefficients_exact():
    for c in psi_in_exterior(9).terms.values():
        assert all(isinstance(v, Fraction) for v in c.coeffs)
    for c in todd_symmetric(6).terms.values():
        assert all(isinstance(v, Fraction) for v in c.coeffs)


# --- Chern character ---------------------------------------------------------------------


def test_chern_of_simple():
    d = 6
    assert chern_of(LambdaExpr.one(), d) == SymmPoly.one(d)
    ref = SymmPoly({(): n}, d)
    for k in range(1, d + 1):
        ref = ref + SymmPoly.gen("p", k, d, F(1, _fact(k)))
    assert chern_of(LambdaExpr.exterior(1), d) == newton_convert(ref)


def _fact(k):
    out = 1
    for i in range(2, k + 1):
        out *= i
    return out


def test_chern_of_exterior_square_on_roots():
    # ch Lambda^2 E = sum_{i<j} e^{x_i + x_j}; check on two roots through degree 4
    d = 4
    xs = sympy.symbols("x1:3")
    got = symm_to_roots_n(chern_of(LambdaExpr.exterior(2), d), xs, n_value=2)
    t = sympy.symbols("t")
    full = sympy.exp(t * (xs[0] + xs[1]))
    ref = sum(sympy.expand(sympy.diff(full, t, k).subs(t, 0)) / sympy.factorial(k) for k in range(d + 1))
    assert sympy.expand(got - ref) == 0


def symm_to_roots_n(poly, xs, n_value):
    e = {k: sympy.Add(*[sympy.Mul(*c) for c in combinations(xs, k)]) for k in range(1, len(xs) + 1)}
    out = 0
    for mono, c in poly.terms.items():
        coef = c(n_value)
        term = sympy.Rational(coef.numerator, coef.denominator)
        for (_, k) in mono:
            term *= e.get(k, 0)
        out += term
    return sympy.expand(out)


def test_chern_of_psi_equals_todd_through_eight():
    t = time.perf_counter()
    for d in range(0, 9):
        assert (chern_of(psi_in_exterior(2 * d), d) - todd_symmetric(d)).is_zero()
    assert time.perf_counter() - t < 30.0


@pytest.mark.parametrize("d", [0, 4, 8])
def test_psi_multiplicative_and_stable(d):
    rep = verify_psi_multiplicative(d)
    assert rep.multiplicative and rep.stable and rep.ok


# --- rank polynomials --------------------------------------------------------------------

fractions = st.fractions(min_value=-5, max_value=5, max_denominator=7)
polys = st.lists(fractions, max_size=4).map(RationalPolyInN)


@settings(max_examples=60, deadline=None)
@given(polys, polys, polys, fractions)
def test_rank_polynomials_form_a_ring(a, b, c, v):
    assert (a + b) * c == a * c + b * c
    assert (a * b) * c == a * (b * c)
    assert (a * b)(v) == a(v) * b(v)
    assert (a + b)(v) == a(v) + b(v)
    assert a.shift(v)(F(1, 3)) == a(F(1, 3) + v)
    assert a - a == QN()


def test_binom_n_values():
    for shift in (-2, 0, 3):
        for r in range(5):
            for nv in range(0, 8):
                assert binom_n(shift, r)(nv) == F(sympy.binomial(nv + shift, r))


def test_rank_polynomial_formatting():
    assert str(QN([24, -19, 3]) * F(1, 24)) == "(3n^2 - 19n + 24)/24"
    assert str(QN.const(F(-1, 6))) == "-1/6"
    assert str(QN()) == "0"
    assert str(n) == "n"
