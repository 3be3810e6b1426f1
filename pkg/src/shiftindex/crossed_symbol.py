"""Symbols of shift operators as elements of a crossed product.

A shift operator on the torus is a finite sum ``D = sum_k D_k T^k`` where
``T u = u o g`` for a linear torus map ``g(x) = A x mod 2 pi``.  Its symbol
is the finite sequence ``k -> sigma(D_k)`` of matrix valued functions on
the cosphere bundle, multiplied with the twisted rule

    (ab)(k)(z) = sum_{l+m=k} a(l)(z) b(m)(dg^l z)

where ``dg(x, xi) = (A x, normalize(A^{-T} xi))`` is the induced map of
the cosphere bundle.

Evaluators are plain callables ``ev(x, xi)`` taking arrays of shape
``(..., d)`` and returning ``(..., N, N)`` complex arrays.  They are never
sampled on a grid, since ``dg`` does not preserve any finite grid on the
sphere.
"""
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional

import numpy as np

TWO_PI = 2.0 * np.pi

Evaluator = Callable[[np.ndarray, np.ndarray], np.ndarray]


def normalize(v, axis=-1):
    """Scale vectors to unit length along ``axis``."""
    v = np.asarray(v, dtype=float)
    nrm = np.linalg.norm(v, axis=axis, keepdims=True)
    if np.any(nrm == 0.0):
        raise ValueError("zero covector has no direction")
    return v / nrm


@dataclass(frozen=True)
class PhasePoint:
    """A point ``(x, xi)`` of the cosphere bundle of the torus.

    ``x`` is reduced into ``[0, 2 pi)`` and ``xi`` is normalized on
    construction.
    """

    x: np.ndarray
    xi: np.ndarray

    def __post_init__(self):
        x = np.mod(np.asarray(self.x, dtype=float), TWO_PI)
        xi = normalize(self.xi)
        if x.shape != xi.shape or x.ndim != 1:
            raise ValueError("x and xi must be 1-d arrays of equal length")
        x.setflags(write=False)
        xi.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "xi", xi)


class ShiftMap:
    """Linear torus diffeomorphism ``g(x) = A x mod 2 pi``.

    Parameters
    ----------
    A : array_like
        Square integer matrix with determinant +1 or -1.

    Notes
    -----
    On Fourier modes the shift ``T u = u o g`` sends ``e^{i(k, x)}`` to
    ``e^{i(A^T k, x)}``.  On covectors the induced map is
    ``xi -> normalize(A^{-T} xi)``; this is the map used in the product of
    symbols.
    """

    def __init__(self, A):
        A = np.asarray(A)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError("A must be a square matrix")
        if not np.all(np.equal(np.mod(A, 1), 0)):
            raise ValueError("A must have integer entries")
        A = A.astype(np.int64)
        det = int(round(np.linalg.det(A)))
        if abs(det) != 1:
            raise ValueError(f"|det A| must be 1, got {det}")
        self.A = A
        self.d = A.shape[0]
        self.A_inv = np.rint(np.linalg.inv(A)).astype(np.int64)
        assert np.array_equal(self.A @ self.A_inv, np.eye(self.d, dtype=np.int64))
        self._cache = {0: np.eye(self.d, dtype=np.int64)}
        self.A.setflags(write=False)
        self.A_inv.setflags(write=False)

    def __repr__(self):
        return f"ShiftMap({self.A.tolist()})"

    def __eq__(self, other):
        return isinstance(other, ShiftMap) and np.array_equal(self.A, other.A)

    def __hash__(self):
        return hash(self.A.tobytes())

    def power(self, j: int) -> np.ndarray:
        """Integer matrix of ``g^j`` (negative ``j`` allowed)."""
        if j not in self._cache:
            base = self.A if j > 0 else self.A_inv
            M = np.eye(self.d, dtype=np.int64)
            for _ in range(abs(j)):
                M = M @ base
            self._cache[j] = M
        return self._cache[j]

    def act_x(self, x, j: int = 1):
        """Apply ``g^j`` to torus points (last axis is the coordinate)."""
        if j == 0:
            return np.asarray(x, dtype=float)
        return np.mod(np.asarray(x, dtype=float) @ self.power(j).T.astype(float), TWO_PI)

    def act_xi(self, xi, j: int = 1):
        """Apply ``(dg)^j`` to unit covectors: ``normalize(A^{-jT} xi)``."""
        if j == 0:
            return np.asarray(xi, dtype=float)
        M = self.power(-j).T.astype(float)
        return normalize(np.asarray(xi, dtype=float) @ M.T)

    def act_modes(self, k, j: int = 1):
        """Fourier-mode action of ``T^j``: ``k -> (A^T)^j k``."""
        return np.asarray(k) @ self.power(j)


def _as_evaluator(value, N):
    if callable(value):
        return value
    mat = np.asarray(value, dtype=complex)
    if mat.shape != (N, N):
        raise ValueError(f"constant component must be {N}x{N}")

    def ev(x, xi, mat=mat):
        shape = np.shape(x)[:-1]
        return np.broadcast_to(mat, shape + (N, N)).copy()

    return ev


class CrossedSymbol:
    """Finite sequence ``k -> a(k)`` of matrix valued evaluators.

    Parameters
    ----------
    rank : int
        Matrix size N shared by all components.
    components : dict
        Maps integers to evaluators ``ev(x, xi) -> (..., N, N)`` or to
        constant N x N matrices.
    """

    def __init__(self, rank: int, components: Dict[int, object]):
        if int(rank) < 1:
            raise ValueError("rank must be positive")
        self.rank = int(rank)
        self._components = {int(k): _as_evaluator(v, self.rank) for k, v in components.items()}

    @property
    def support(self):
        return tuple(sorted(self._components))

    @property
    def components(self):
        return dict(self._components)

    def __repr__(self):
        return f"CrossedSymbol(rank={self.rank}, support={self.support})"

    def component(self, k: int) -> Evaluator:
        if k in self._components:
            return self._components[k]
        N = self.rank

        def zero(x, xi):
            return np.zeros(np.shape(x)[:-1] + (N, N), dtype=complex)

        return zero

    def evaluate(self, k: int, x, xi) -> np.ndarray:
        """Value of the ``k``-th component at points ``(x, xi)``."""
        x = np.asarray(x, dtype=float)
        xi = np.asarray(xi, dtype=float)
        return np.asarray(self.component(k)(x, xi), dtype=complex)

    def at(self, k: int, point: PhasePoint) -> np.ndarray:
        return self.evaluate(k, point.x, point.xi)

    @classmethod
    def identity(cls, rank: int) -> "CrossedSymbol":
        return cls(rank, {0: np.eye(rank)})

    @classmethod
    def shift(cls, rank: int, power: int = 1) -> "CrossedSymbol":
        """Symbol of ``T^power`` acting diagonally on C^rank."""
        return cls(rank, {power: np.eye(rank)})

    def __add__(self, other):
        if not isinstance(other, CrossedSymbol):
            other = CrossedSymbol(self.rank, {0: np.asarray(other) * np.eye(self.rank)})
        if other.rank != self.rank:
            raise ValueError("rank mismatch")
        comps = dict(self._components)
        for k, ev in other._components.items():
            if k in comps:
                comps[k] = _sum_ev(comps[k], ev)
            else:
                comps[k] = ev
        return CrossedSymbol(self.rank, comps)

    __radd__ = __add__

    def scale(self, c) -> "CrossedSymbol":
        def wrap(ev):
            return lambda x, xi: c * ev(x, xi)

        return CrossedSymbol(self.rank, {k: wrap(ev) for k, ev in self._components.items()})

    def __neg__(self):
        return self.scale(-1.0)

    def __sub__(self, other):
        if not isinstance(other, CrossedSymbol):
            other = CrossedSymbol(self.rank, {0: np.asarray(other) * np.eye(self.rank)})
        return self + (-other)


class SeparableEvaluator:
    """Evaluator ``z -> sum_r kron(spin_r(xi), coef_r(x))`` exposing its factors.

    ``spin_r`` and ``coef_r`` are callables of one argument.  A factor
    carrying the attribute ``constant = True`` is treated as independent
    of its argument (its derivatives vanish exactly).
    """

    def __init__(self, terms):
        self.terms = [(s, c) for s, c in terms]

    def __call__(self, x, xi):
        out = None
        for spin, coef in self.terms:
            S = np.asarray(spin(xi), dtype=complex)
            C = np.asarray(coef(x), dtype=complex)
            val = np.einsum("...ab,...ij->...aibj", S, C)
            shp = val.shape
            val = val.reshape(shp[:-4] + (shp[-4] * shp[-3], shp[-2] * shp[-1]))
            out = val if out is None else out + val
        return out


def constant_factor(mat):
    """Factor ``v -> mat`` (broadcast over leading axes), flagged constant."""
    mat = np.asarray(mat, dtype=complex)

    def fn(v):
        return np.broadcast_to(mat, np.shape(v)[:-1] + mat.shape)

    fn.constant = True
    return fn


def is_separable(a: CrossedSymbol) -> bool:
    return all(isinstance(ev, SeparableEvaluator) for ev in a.components.values())


def _sum_ev(e1, e2):
    if isinstance(e1, SeparableEvaluator) and isinstance(e2, SeparableEvaluator):
        return SeparableEvaluator(e1.terms + e2.terms)
    return lambda x, xi: e1(x, xi) + e2(x, xi)


def _compose_factor(fa, fb, act):
    """Factor ``v -> fa(v) @ fb(act(v))``; constant when both inputs are."""
    if getattr(fa, "constant", False) is True and getattr(fb, "constant", False) is True:
        probe = np.zeros((1, 1))
        return constant_factor((np.asarray(fa(probe)) @ np.asarray(fb(probe)))[0])

    def fn(v):
        return np.asarray(fa(v), dtype=complex) @ np.asarray(fb(act(v)), dtype=complex)

    return fn


def _separable_product(pairs, g):
    terms = []
    for l, ea, eb in pairs:
        for sa, ca in ea.terms:
            for sb, cb in eb.terms:
                terms.append((_compose_factor(sa, sb, lambda xi, l=l: g.act_xi(xi, l)),
                              _compose_factor(ca, cb, lambda x, l=l: g.act_x(x, l))))
    return SeparableEvaluator(terms)


def multiply(a: CrossedSymbol, b: CrossedSymbol, g: ShiftMap) -> CrossedSymbol:
    """Crossed product ``ab`` of two symbols over the shift ``g``.

    The component at ``k`` is ``z -> sum_{l+m=k} a(l)(z) b(m)(dg^l z)``.
    When both factors have separable components the product keeps that
    structure.
    """
    if a.rank != b.rank:
        raise ValueError(f"rank mismatch: {a.rank} != {b.rank}")
    terms: Dict[int, list] = {}
    for l, ea in a.components.items():
        for m, eb in b.components.items():
            terms.setdefault(l + m, []).append((l, ea, eb))

    def make(pairs):
        def ev(x, xi):
            x = np.asarray(x, dtype=float)
            xi = np.asarray(xi, dtype=float)
            out = None
            for l, ea, eb in pairs:
                val = ea(x, xi) @ eb(g.act_x(x, l), g.act_xi(xi, l))
                out = val if out is None else out + val
            return out

        return ev

    if is_separable(a) and is_separable(b):
        return CrossedSymbol(a.rank, {k: _separable_product(p, g) for k, p in terms.items()})
    return CrossedSymbol(a.rank, {k: make(p) for k, p in terms.items()})


def tau_component(a: CrossedSymbol) -> Callable[[np.ndarray, np.ndarray], np.ndarray]:
    """Pointwise matrix trace of the ``k = 0`` coefficient."""
    ev = a.component(0)

    def tau(x, xi):
        return np.trace(ev(np.asarray(x, dtype=float), np.asarray(xi, dtype=float)),
                        axis1=-2, axis2=-1)

    return tau


@dataclass(frozen=True)
class PhaseSamples:
    """Finite sample set of phase points (rows of ``x`` and ``xi``)."""

    x: np.ndarray
    xi: np.ndarray
    label: str = ""
    seed: Optional[int] = None

    def __post_init__(self):
        x = np.mod(np.atleast_2d(np.asarray(self.x, dtype=float)), TWO_PI)
        xi = normalize(np.atleast_2d(np.asarray(self.xi, dtype=float)))
        if x.shape != xi.shape:
            raise ValueError("x and xi sample arrays must have equal shape")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "xi", xi)

    def __len__(self):
        return self.x.shape[0]

    @classmethod
    def product(cls, M: int, sphere_nodes, d: int = 3):
        """Uniform ``M^d`` torus grid times a list of sphere nodes."""
        axis = TWO_PI * np.arange(M) / M
        xs = np.stack(np.meshgrid(*([axis] * d), indexing="ij"), axis=-1).reshape(-1, d)
        nodes = normalize(np.asarray(sphere_nodes, dtype=float))
        x = np.repeat(xs, len(nodes), axis=0)
        xi = np.tile(nodes, (len(xs), 1))
        return cls(x, xi, label=f"{M}^{d} x {len(nodes)} nodes")

    @classmethod
    def random(cls, count: int, d: int = 3, seed: int = 0):
        rng = np.random.default_rng(seed)
        x = rng.uniform(0.0, TWO_PI, size=(count, d))
        xi = rng.normal(size=(count, d))
        return cls(x, xi, label=f"{count} random points", seed=seed)


@dataclass(frozen=True)
class EllipticityCertificate:
    """Outcome of checking a candidate inverse on a sample set.

    ``residual`` is the largest spectral-norm deviation of ``a a_inv`` and
    ``a_inv a`` from the unit, over all components and samples.
    ``min_singular_value`` is ``1 / sum_k max_z |a_inv(k)(z)|``, a lower
    bound for ``|a v| / |v|`` in any representation where the shift acts
    unitarily, valid when the residual is negligible.
    """

    min_singular_value: float
    sample_count: int
    residual: float
    details: dict = field(default_factory=dict, compare=False)

    def ok(self, tol: float = 1e-10) -> bool:
        return self.residual < tol and self.min_singular_value > 0


def _spectral_norm(mats):
    return np.linalg.norm(mats, ord=2, axis=(-2, -1))


def check_elliptic(a: CrossedSymbol, a_inv: CrossedSymbol, g: ShiftMap,
                   samples: PhaseSamples, chunk: int = 20000) -> EllipticityCertificate:
    """Evaluate ``a a_inv`` and ``a_inv a`` on ``samples`` and certify."""
    if a.rank != a_inv.rank:
        raise ValueError("rank mismatch")
    N = a.rank
    eye = np.eye(N)
    left = multiply(a, a_inv, g)
    right = multiply(a_inv, a, g)
    residual = 0.0
    per_k = {}
    inv_sup = {k: 0.0 for k in a_inv.support}
    for start in range(0, len(samples), chunk):
        x = samples.x[start:start + chunk]
        xi = samples.xi[start:start + chunk]
        for name, prod in (("right_inverse", left), ("left_inverse", right)):
            for k in prod.support:
                val = prod.evaluate(k, x, xi)
                if k == 0:
                    val = val - eye
                r = float(np.max(_spectral_norm(val))) if len(x) else 0.0
                per_k[(name, k)] = max(per_k.get((name, k), 0.0), r)
                residual = max(residual, r)
        for k in a_inv.support:
            inv_sup[k] = max(inv_sup[k], float(np.max(_spectral_norm(a_inv.evaluate(k, x, xi)))))
    bound = sum(inv_sup.values())
    msv = 1.0 / bound if bound > 0 else 0.0
    details = {"per_component": {f"{n}[{k}]": v for (n, k), v in sorted(per_k.items())},
               "samples": samples.label}
    return EllipticityCertificate(min_singular_value=msv, sample_count=len(samples),
                                  residual=residual, details=details)


def two_term_symbol(p: Evaluator, d0: Evaluator, g: ShiftMap, rank: int,
                    samples: Optional[PhaseSamples] = None, tol: float = 1e-10) -> CrossedSymbol:
    """Symbol ``d0 p T p + (1 - p)`` of a two-term shift operator.

    Components: ``1: z -> d0(z) p(z) p(dg z)`` and ``0: z -> 1 - p(z)``.

    Raises
    ------
    ValueError
        If ``p`` fails to be idempotent at the sample points.
    """
    if samples is None:
        samples = PhaseSamples.random(256, d=g.d, seed=0)
    pv = np.asarray(p(samples.x, samples.xi), dtype=complex)
    dev = float(np.max(np.abs(pv @ pv - pv)))
    if dev > tol:
        raise ValueError(f"p is not idempotent: max |p^2 - p| = {dev:.3e}")
    eye = np.eye(rank)
    # rank zero p: the symbol collapses to the unit
    if float(np.max(np.abs(pv))) == 0.0:
        return CrossedSymbol.identity(rank)

    def comp1(x, xi):
        return d0(x, xi) @ p(x, xi) @ p(g.act_x(x), g.act_xi(xi))

    def comp0(x, xi):
        return eye - p(x, xi)

    return CrossedSymbol(rank, {1: comp1, 0: comp0})


def two_term_margin(p: Evaluator, d0: Evaluator, g: ShiftMap, samples: PhaseSamples) -> float:
    """Smallest singular value of ``p(z) d0(z)`` on ``im p(dg z)``.

    Positive on all samples means the two-term symbol is elliptic there.
    """
    x, xi = samples.x, samples.xi
    pz = p(x, xi)
    pg = p(g.act_x(x), g.act_xi(xi))
    r = int(round(float(np.real(np.trace(pz[0])))))
    if r == 0:
        return np.inf
    s = np.linalg.svd(pz @ d0(x, xi) @ pg, compute_uv=False)
    return float(np.min(s[:, r - 1]))
