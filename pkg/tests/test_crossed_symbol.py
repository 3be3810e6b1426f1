import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from shiftindex.crossed_symbol import (CrossedSymbol, PhasePoint, PhaseSamples, ShiftMap,
                                       check_elliptic, is_separable, multiply, tau_component,
                                       two_term_margin, two_term_symbol)
from shiftindex.torus_model import (PAULI, cat_shift, degree_test_map, example_symbols,
                                    projection_on_sphere)
from shiftindex.chern_numeric import SphereQuadrature

G = cat_shift()


def trig_field(rng, N=2, scale=0.3):
    """Random bandwidth-1 matrix trigonometric polynomial x -> (..., N, N)."""
    modes = [np.array(m) for m in [(0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1), (1, -1, 0)]]
    mats = [rng.normal(size=(N, N)) + 1j * rng.normal(size=(N, N)) for _ in modes]
    mats = [m * (1.0 if i == 0 else scale) for i, m in enumerate(mats)]

    def c(x):
        x = np.asarray(x, dtype=float)
        out = 0
        for m, F in zip(modes, mats):
            out = out + np.exp(1j * (x @ m))[..., None, None] * F
        return out

    return c


def spin_field(rng):
    """Random matrix function of xi: alpha + sum_j beta_j c_j xi_j + gamma xi_3^2."""
    a = rng.normal(size=4) + 1j * rng.normal(size=4)

    def q(xi):
        xi = np.asarray(xi, dtype=float)
        out = a[0] * np.eye(2) + np.einsum("...j,jab->...ab", a[1:4] * xi, PAULI)
        return out + (xi[..., 2] ** 2)[..., None, None] * np.diag([1.0, -0.5])

    return q


def random_symbol(rng, support, x_part=True, xi_part=True):
    comps = {}
    for k in support:
        c = trig_field(rng) if x_part else (lambda x: np.eye(2))
        q = spin_field(rng) if xi_part else (lambda xi: np.eye(2))
        comps[k] = (lambda x, xi, c=c, q=q: np.broadcast_to(c(x), np.shape(x)[:-1] + (2, 2))
                    @ np.broadcast_to(q(xi), np.shape(xi)[:-1] + (2, 2)))
    return CrossedSymbol(2, comps)


# --- brute-force composition of operators on Fourier modes -------------------------------


def quantize_apply(ev, shift, vec, M=16):
    """Apply Op(ev) T^shift to a sparse vector {mode: C^2}; Op is left quantization.

    The mode sum is not truncated, so for symbols of the form c(x) q(xi) the
    result is the exact action of the operator ``c(x) q(D) T^shift``.
    """
    axis = 2 * np.pi * np.arange(M) / M
    X = np.stack(np.meshgrid(axis, axis, axis, indexing="ij"), axis=-1)
    out = {}
    for k, v in vec.items():
        kk = tuple(G.act_modes(np.array(k), shift).tolist())
        if kk == (0, 0, 0):
            continue  # multipliers are taken to vanish on the zero mode
        xi = np.broadcast_to(np.array(kk, dtype=float) / np.linalg.norm(kk), X.shape)
        vals = ev(X, xi)  # (M, M, M, 2, 2)
        coef = np.fft.fftn(vals, axes=(0, 1, 2)) / M ** 3
        for j in np.argwhere(np.max(np.abs(coef), axis=(-2, -1)) > 1e-12):
            mode = tuple(((j + M // 2) % M - M // 2).tolist())
            target = tuple(int(a + b) for a, b in zip(kk, mode))
            out[target] = out.get(target, 0) + coef[tuple(j)] @ v
    return out


def op_apply(sym, vec):
    out = {}
    for k in sym.support:
        for mode, v in quantize_apply(sym.component(k), k, vec).items():
            out[mode] = out.get(mode, 0) + v
    return out


@pytest.mark.parametrize("case", ["x_then_xi", "xi_then_x"])
def test_multiply_matches_operator_composition(case):
    # symbol classes for which c(x) q(D) T^l c'(x) q'(D) T^m has the product symbol exactly:
    # (a x-only, b = c'(x) q'(xi)) and (a = c(x) q(xi), b xi-only)
    rng = np.random.default_rng(7 if case == "x_then_xi" else 8)
    if case == "x_then_xi":
        a = random_symbol(rng, (-1, 0), xi_part=False)
        b = random_symbol(rng, (0, 1))
    else:
        a = random_symbol(rng, (-1, 0))
        b = random_symbol(rng, (0, 1), x_part=False)
    ab = multiply(a, b, G)
    R = 6
    cols = [(3, -2, 1), (R, 1, -4), (-5, 6, 2), (1, 1, R)]
    for col in cols:
        for e in np.eye(2):
            vec = {col: e.astype(complex)}
            lhs = op_apply(a, op_apply(b, vec))
            rhs = op_apply(ab, vec)
            keys = set(lhs) | set(rhs)
            err = max(np.max(np.abs(lhs.get(k, 0) - rhs.get(k, 0))) for k in keys)
            assert err < 1e-10


def test_identity_neutral():
    rng = np.random.default_rng(0)
    a = random_symbol(rng, (-1, 0, 2))
    one = CrossedSymbol.identity(2)
    s = PhaseSamples.random(50, seed=3)
    for prod in (multiply(one, a, G), multiply(a, one, G)):
        assert prod.support == a.support
        for k in a.support:
            np.testing.assert_allclose(prod.evaluate(k, s.x, s.xi), a.evaluate(k, s.x, s.xi),
                                       atol=1e-14, rtol=0)


def test_rank_mismatch():
    with pytest.raises(ValueError):
        multiply(CrossedSymbol.identity(2), CrossedSymbol.identity(3), G)


def test_shift_map_validation():
    with pytest.raises(ValueError):
        ShiftMap([[2, 0], [0, 1]])
    with pytest.raises(ValueError):
        ShiftMap([[1.5, 0], [0, 1]])
    g = ShiftMap([[2, 1], [1, 1]])
    assert np.array_equal(g.power(3) @ g.power(-3), np.eye(2, dtype=int))


def test_phase_point_normalizes():
    z = PhasePoint([7.0, -1.0, 0.0], [0.0, 3.0, 4.0])
    assert np.all((z.x >= 0) & (z.x < 2 * np.pi))
    np.testing.assert_allclose(z.xi, [0.0, 0.6, 0.8])
    with pytest.raises(ValueError):
        PhasePoint([0, 0, 0], [0, 0, 0])


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_associativity(seed):
    rng = np.random.default_rng(seed)
    sup = [tuple(sorted(rng.choice(np.arange(-2, 3), size=2, replace=False))) for _ in range(3)]
    a, b, c = (random_symbol(rng, s) for s in sup)
    left = multiply(multiply(a, b, G), c, G)
    right = multiply(a, multiply(b, c, G), G)
    assert left.support == right.support
    s = PhaseSamples.random(100, seed=seed % 997)
    for k in left.support:
        L = left.evaluate(k, s.x, s.xi)
        R = right.evaluate(k, s.x, s.xi)
        scale = max(1.0, np.max(np.abs(L)))
        assert np.max(np.abs(L - R)) / scale < 1e-11


@settings(max_examples=25, deadline=None)
@given(st.lists(st.integers(-3, 3), min_size=1, max_size=3, unique=True),
       st.lists(st.integers(-3, 3), min_size=1, max_size=3, unique=True))
def test_support_rule(sa, sb):
    rng = np.random.default_rng(len(sa) * 7 + len(sb))
    a, b = random_symbol(rng, sa), random_symbol(rng, sb)
    minkowski = {i + j for i in sa for j in sb}
    assert set(multiply(a, b, G).support) <= minkowski


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10 ** 6), st.integers(-2, 2))
def test_trace_cyclicity_at_a_point(seed, k):
    rng = np.random.default_rng(seed)
    a = random_symbol(rng, (k,))
    b = random_symbol(rng, (-k,))
    s = PhaseSamples.random(20, seed=seed % 101)
    A = a.evaluate(k, s.x, s.xi)
    B = b.evaluate(-k, G.act_x(s.x, k), G.act_xi(s.xi, k))
    t1 = np.trace(A @ B, axis1=1, axis2=2)
    t2 = np.trace(B @ A, axis1=1, axis2=2)
    assert np.max(np.abs(t1 - t2)) < 1e-13 * max(1.0, np.max(np.abs(t1)))


@settings(max_examples=20, deadline=None)
@given(st.floats(0.1, 10.0))
def test_example_symbol_is_homogeneous_of_degree_zero(scale):
    sy = example_symbols(degree_test_map(1))
    s = PhaseSamples.random(30, seed=4)
    for k in sy["D"].support:
        np.testing.assert_allclose(sy["D"].evaluate(k, s.x, scale * s.xi),
                                   sy["D"].evaluate(k, s.x, s.xi), atol=1e-13)


def test_example_pair_certifies_on_product_grid():
    sy = example_symbols(degree_test_map(1))
    sphere = SphereQuadrature.lebedev(7)
    assert len(sphere) == 26
    cert = check_elliptic(sy["D"], sy["B"], G, PhaseSamples.product(16, sphere.nodes))
    assert cert.sample_count == 16 ** 3 * 26
    assert cert.residual < 1e-10
    assert cert.min_singular_value > 0
    assert cert.ok()


def test_identity_certificate():
    one = CrossedSymbol.identity(3)
    cert = check_elliptic(one, one, G, PhaseSamples.random(10))
    assert cert.residual == 0.0
    assert cert.min_singular_value == 1.0


def test_perturbed_inverse_is_detected():
    sy = example_symbols(degree_test_map(1))
    eps = 0.1
    bump = np.zeros((4, 4))
    bump[1, 2] = eps
    wrong = sy["B"] + CrossedSymbol(4, {0: bump})
    cert = check_elliptic(sy["D"], wrong, G, PhaseSamples.random(200, seed=5))
    assert cert.residual >= eps - 1e-12


def test_tau_component():
    one = CrossedSymbol.identity(3)
    s = PhaseSamples.random(5)
    np.testing.assert_allclose(tau_component(one)(s.x, s.xi), 3.0)
    shifted = CrossedSymbol.shift(2, 1)
    np.testing.assert_array_equal(tau_component(shifted)(s.x, s.xi), 0.0)
    sy = example_symbols(degree_test_map(2))
    prod = multiply(sy["D"], sy["B"], G)
    np.testing.assert_allclose(tau_component(prod)(s.x, s.xi), 4.0, atol=1e-10)


def _two_term_inputs(N=2):
    f = degree_test_map(1, N)

    def lift(spin, coef, x):
        return np.einsum("...ab,...ij->...aibj", spin, coef).reshape(
            np.shape(x)[:-1] + (2 * N, 2 * N))

    P = lambda x, xi: lift(projection_on_sphere(x, xi), np.eye(N), x)
    d0 = lambda x, xi: lift(np.eye(2), f(x), x)
    return P, d0, f


def test_two_term_symbol_reproduces_example():
    P, d0, f = _two_term_inputs()
    sigma = two_term_symbol(P, d0, G, 4)
    ref = example_symbols(f)["D"]
    s = PhaseSamples.random(40, seed=9)
    for k in (0, 1):
        np.testing.assert_allclose(sigma.evaluate(k, s.x, s.xi), ref.evaluate(k, s.x, s.xi),
                                   atol=1e-13)
    assert two_term_margin(P, d0, G, s) > 0


def test_two_term_symbol_trivial_cases():
    eye = lambda x, xi: np.broadcast_to(np.eye(2), np.shape(x)[:-1] + (2, 2))
    zero = lambda x, xi: np.zeros(np.shape(x)[:-1] + (2, 2))
    s = PhaseSamples.random(10)
    t = two_term_symbol(eye, eye, G, 2)
    np.testing.assert_allclose(t.evaluate(1, s.x, s.xi), np.broadcast_to(np.eye(2), (10, 2, 2)))
    np.testing.assert_allclose(t.evaluate(0, s.x, s.xi), 0.0)
    assert two_term_symbol(zero, eye, G, 2).support == (0,)


def test_two_term_symbol_rejects_non_projection():
    half = lambda x, xi: 0.5 * np.broadcast_to(np.eye(2), np.shape(x)[:-1] + (2, 2))
    with pytest.raises(ValueError, match="idempotent"):
        two_term_symbol(half, half, G, 2)


def test_separable_structure_survives_products():
    sy = example_symbols(degree_test_map(1))
    prod = multiply(sy["D0"], sy["D1"], G)
    assert is_separable(prod)
    s = PhaseSamples.random(30, seed=11)
    for k in (0, 1):
        np.testing.assert_allclose(prod.evaluate(k, s.x, s.xi), sy["D"].evaluate(k, s.x, s.xi),
                                   atol=1e-14)
