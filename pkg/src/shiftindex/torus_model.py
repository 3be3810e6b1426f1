"""The three-torus example: Dirac symbol, cat-map shift and the operator

    D = (f (x) 1)(1 (x) P) T (1 (x) P) + 1 (x) (1 - P)

acting on spinor valued functions on T^3 with coefficients in C^N.

``P`` is the positive spectral projection of the Dirac operator
``-i sum_j c_j d/dx_j``; on the Fourier mode ``e^{i(k, x)}`` it is the
rank one projection ``p(k) = (1 + c(k/|k|))/2`` (and ``p(0) = 0``).
``T`` is the shift by the cat map.  Tensor ordering throughout is
spinor (x) coefficient, so matrices of size 2N are ``kron(spin, coef)``.
"""
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Sequence

import numpy as np
import scipy.fft as sfft
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .crossed_symbol import (CrossedSymbol, SeparableEvaluator, ShiftMap, TWO_PI, constant_factor,
                             normalize)

PAULI = np.array([
    [[0, 1], [1, 0]],
    [[0, -1j], [1j, 0]],
    [[1, 0], [0, -1]],
], dtype=complex)

CAT_MATRIX = np.array([[2, 1, 0], [1, 1, 0], [0, 0, 1]])


@dataclass(frozen=True)
class DiracData:
    """Pauli matrices used as Clifford generators in three dimensions."""

    c: np.ndarray = field(default_factory=lambda: PAULI.copy())

    def clifford(self, xi):
        return np.einsum("...j,jab->...ab", np.asarray(xi, dtype=float), self.c)


def cat_shift() -> ShiftMap:
    return ShiftMap(CAT_MATRIX)


def dirac_symbol(xi) -> np.ndarray:
    """``c(xi) = sum_j c_j xi_j`` for unit covectors (vectorized)."""
    xi = np.asarray(xi, dtype=float)
    if np.any(np.linalg.norm(xi, axis=-1) == 0):
        raise ValueError("zero covector")
    return np.einsum("...j,jab->...ab", xi, PAULI)


def spectral_projection(k) -> np.ndarray:
    """Symbol ``(1 + c(k/|k|))/2`` of the positive spectral projection.

    Accepts any nonzero real vectors (so it doubles as the symbol on the
    sphere); the zero vector gets the zero matrix.
    """
    k = np.asarray(k, dtype=float)
    nrm = np.linalg.norm(k, axis=-1)
    safe = np.where(nrm > 0, nrm, 1.0)
    c = np.einsum("...j,jab->...ab", k / safe[..., None], PAULI)
    p = 0.5 * (np.eye(2) + c)
    return np.where((nrm > 0)[..., None, None], p, 0.0)


def projection_on_sphere(x, xi):
    """Evaluator form of ``p(xi)``, independent of ``x``."""
    return spectral_projection(xi)


# ---------------------------------------------------------------------------
# matrix valued multipliers


class MultiplierF:
    """Matrix valued trigonometric polynomial ``f(x) = sum_m F_m e^{i(m, x)}``.

    Parameters
    ----------
    coeffs : dict
        Maps integer 3-tuples ``m`` to N x N complex matrices.
    meta : dict, optional
        Provenance (test-map name, parameters, truncation error).
    """

    def __init__(self, coeffs: Dict[tuple, np.ndarray], meta: Optional[dict] = None):
        items = sorted((tuple(int(v) for v in m), np.atleast_2d(np.asarray(F, dtype=complex)))
                       for m, F in coeffs.items())
        if not items:
            raise ValueError("empty coefficient table")
        self.modes = np.array([m for m, _ in items], dtype=np.int64)
        self.mats = np.stack([F for _, F in items])
        self.N = self.mats.shape[-1]
        self.d = self.modes.shape[1]
        self.bandwidth = int(np.max(np.abs(self.modes))) if len(self.modes) else 0
        self.meta = dict(meta or {})
        self.modes.setflags(write=False)
        self.mats.setflags(write=False)

    def __repr__(self):
        return f"MultiplierF(N={self.N}, bandwidth={self.bandwidth}, terms={len(self.modes)})"

    @property
    def coeffs(self):
        return {tuple(m): F for m, F in zip(self.modes.tolist(), self.mats)}

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        phase = np.exp(1j * (x @ self.modes.T))  # (..., K)
        return np.tensordot(phase, self.mats, axes=([-1], [0]))

    def inverse(self, x) -> np.ndarray:
        return np.linalg.inv(self(x))

    def on_grid(self, L: int) -> np.ndarray:
        """Exact samples on the uniform ``L^3`` grid, shape ``(L, L, L, N, N)``."""
        if 2 * self.bandwidth >= L:
            raise ValueError(f"grid size {L} aliases bandwidth {self.bandwidth}")
        spec = np.zeros((L,) * self.d + (self.N, self.N), dtype=complex)
        idx = tuple(np.mod(self.modes[:, j], L) for j in range(self.d))
        spec[idx] = self.mats
        return sfft.ifftn(spec, axes=tuple(range(self.d)), norm="forward")

    def min_abs_det(self, L: int = 32) -> float:
        return float(np.min(np.abs(np.linalg.det(self.on_grid(L)))))

    def __mul__(self, other: "MultiplierF") -> "MultiplierF":
        """Pointwise product (convolution of coefficient tables)."""
        out: Dict[tuple, np.ndarray] = {}
        for m1, F1 in zip(self.modes, self.mats):
            for m2, F2 in zip(other.modes, other.mats):
                key = tuple((m1 + m2).tolist())
                out[key] = out.get(key, 0) + F1 @ F2
        return MultiplierF(out, meta={"product_of": [self.meta.get("name"), other.meta.get("name")]})

    @classmethod
    def constant(cls, mat) -> "MultiplierF":
        mat = np.atleast_2d(np.asarray(mat, dtype=complex))
        return cls({(0, 0, 0): mat}, meta={"name": "constant"})

    @classmethod
    def from_samples(cls, fun: Callable, bandwidth: int, oversample: int = 4,
                     meta: Optional[dict] = None) -> "MultiplierF":
        """Truncate the Fourier series of ``fun`` to ``|m|_inf <= bandwidth``.

        ``fun`` is sampled on a grid of at least ``oversample`` times the
        bandwidth per axis; the sup-norm distance between the samples and
        the truncated series is stored as ``meta['truncation_error']``.
        """
        M = max(8, 2 * int(np.ceil(oversample * (2 * bandwidth + 1) / 2)))
        axis = TWO_PI * np.arange(M) / M
        X = np.stack(np.meshgrid(axis, axis, axis, indexing="ij"), axis=-1)
        vals = np.asarray(fun(X), dtype=complex)
        spec = sfft.fftn(vals, axes=(0, 1, 2), norm="forward")
        freqs = sfft.fftfreq(M, 1.0 / M).astype(int)
        coeffs = {}
        keep = np.zeros_like(spec)
        for i in np.nonzero(np.abs(freqs) <= bandwidth)[0]:
            for j in np.nonzero(np.abs(freqs) <= bandwidth)[0]:
                for l in np.nonzero(np.abs(freqs) <= bandwidth)[0]:
                    coeffs[(freqs[i], freqs[j], freqs[l])] = spec[i, j, l]
                    keep[i, j, l] = spec[i, j, l]
        approx = sfft.ifftn(keep, axes=(0, 1, 2), norm="forward")
        info = dict(meta or {})
        info.update(truncation_error=float(np.max(np.abs(approx - vals))), sample_grid=M)
        return cls(coeffs, meta=info)


def quaternion_matrix(a, b):
    """``a 1 + i sum_j b_j c_j`` for real ``a`` (...,) and ``b`` (..., 3)."""
    return a[..., None, None] * np.eye(2) + 1j * np.einsum("...j,jab->...ab", b, PAULI)


def wilson_map(mass: float = 2.0, orientation: int = 1) -> MultiplierF:
    """Band-limited quaternionic map ``(mass - sum cos x_j) + i o sum_j sin x_j c_j``.

    Here ``o = orientation``.  The map is invertible unless ``mass`` is
    in {-3, -1, 1, 3}, and ``f^* f = (a^2 + |b|^2) 1``.  Its degree as a
    map to ``S^3`` through the chart ``a + i b.c`` is ``-o`` for
    ``mass = 2`` and ``2 o`` for ``mass = 0``; the operator index equals
    this degree.
    """
    coeffs: Dict[tuple, np.ndarray] = {(0, 0, 0): mass * np.eye(2, dtype=complex)}
    for j in range(3):
        e = [0, 0, 0]
        e[j] = 1
        plus, minus = tuple(e), tuple(-v for v in e)
        # cos = (e^{ix} + e^{-ix})/2, i sin = (e^{ix} - e^{-ix})/2
        coeffs[plus] = -0.5 * np.eye(2) + 0.5 * orientation * PAULI[j]
        coeffs[minus] = -0.5 * np.eye(2) - 0.5 * orientation * PAULI[j]
    return MultiplierF(coeffs, meta={"name": "wilson", "mass": mass, "orientation": orientation})


_WILSON_BY_DEGREE = {1: (2.0, -1), -1: (2.0, 1), 2: (0.0, 1), -2: (0.0, -1)}


def degree_test_map(d: int, N: int = 2) -> MultiplierF:
    """Band-limited test multiplier of index ``d`` (``|d| <= 2``).

    ``N > 2`` pads with an identity block; ``d = 0`` is the identity.
    """
    if d == 0:
        f = MultiplierF.constant(np.eye(max(N, 1)))
        f.meta.update(name="constant", degree=0)
        return f
    if d not in _WILSON_BY_DEGREE:
        raise ValueError("band-limited test maps exist for degrees -2..2")
    if N < 2:
        raise ValueError("nonzero degree needs N >= 2")
    mass, orient = _WILSON_BY_DEGREE[d]
    f = wilson_map(mass, orient)
    if N > 2:
        f = MultiplierF({m: _pad(F, N) if m != (0, 0, 0) else _pad(F, N, 1.0)
                         for m, F in f.coeffs.items()}, meta=f.meta)
    f.meta["degree"] = d
    return f


def _pad(F, N, fill=0.0):
    out = np.zeros((N, N), dtype=complex)
    out[:2, :2] = F
    out[2:, 2:] = fill * np.eye(N - 2)
    return out


def scalar_test_map(winding=(1, 0, 0)) -> MultiplierF:
    """Nonvanishing scalar ``e^{i(w, x)} (2 + cos(x_2 + x_3))``."""
    w = tuple(int(v) for v in winding)
    coeffs = {}
    for shift, c in (((0, 0, 0), 2.0), ((0, 1, 1), 0.5), ((0, -1, -1), 0.5)):
        key = tuple(a + b for a, b in zip(w, shift))
        coeffs[key] = coeffs.get(key, 0) + np.array([[c]], dtype=complex)
    return MultiplierF(coeffs, meta={"name": "scalar", "winding": list(w)})


def smooth_step(r, order: int = 2):
    """Odd profile ``S`` with ``S(0) = 0``, ``S(1) = 1`` and ``S^{(j)}(1) = 0`` for ``j <= order``.

    ``S'(r) = c (1 - r^2)^order``; for order 2 this is
    ``(15 r - 10 r^3 + 3 r^5) / 8``.
    """
    from numpy.polynomial import polynomial as P

    dens = P.polypow([1.0, 0.0, -1.0], order)
    prim = P.polyint(dens)
    prim = prim / P.polyval(1.0, prim)
    r = np.clip(np.asarray(r, dtype=float), 0.0, 1.0)
    return P.polyval(r, prim)


def collapse_map(degree: int = 1, center=(np.pi, np.pi, np.pi), width: float = np.pi,
                 smoothness: int = 2):
    """SU(2) valued map of the given degree supported in a ball.

    Inside the ball of radius ``width`` around ``center`` (distances
    measured in the periodic sense) the value is
    ``cos(d theta) + i sin(d theta) (y/|y|).c`` with
    ``theta = pi S(|y|/width)``; outside it is the constant
    ``cos(d pi) = (-1)^d``.  Returns a callable ``x -> (..., 2, 2)``.
    """
    center = np.asarray(center, dtype=float)

    def f(x):
        y = np.mod(np.asarray(x, dtype=float) - center + np.pi, TWO_PI) - np.pi
        r = np.linalg.norm(y, axis=-1) / width
        theta = np.pi * smooth_step(r, smoothness)
        a = np.cos(degree * theta)
        with np.errstate(invalid="ignore", divide="ignore"):
            s = np.where(r > 0, np.sin(degree * theta) / np.where(r > 0, r * width, 1.0), 0.0)
        b = s[..., None] * y
        # the direction is irrelevant where sin vanishes (centre and outside)
        b = np.where((r < 1.0)[..., None], b, 0.0)
        return quaternion_matrix(a, b)

    f.degree = degree
    return f


def su2_normalize(f: Callable) -> Callable:
    """Divide a quaternion-type matrix map by ``sqrt(det)``."""

    def g(x):
        F = f(x)
        return F / np.sqrt(np.linalg.det(F))[..., None, None]

    return g


# ---------------------------------------------------------------------------
# example symbols


def example_symbols(f: Optional[MultiplierF] = None, N: Optional[int] = None,
                    g: Optional[ShiftMap] = None) -> Dict[str, CrossedSymbol]:
    """Symbols of the example operators and their inverses.

    Returns a dict with keys ``D`` (``f p T p + 1 - p``), ``B`` (its
    inverse ``T^{-1} u^{-1} p f^{-1} + 1 - p``), ``D0`` (``f p + 1 - p``),
    ``D0_inv``, ``D1`` (``p T p + 1 - p``) and ``D1_inv``.  Here
    ``u(xi) = p(xi) p(dg xi)`` restricted to a map ``im p(dg xi) -> im p(xi)``
    and ``u^{-1} = p(dg xi) p(xi) / tr(p(xi) p(dg xi))``.

    Every component is a :class:`SeparableEvaluator` (spinor factor of
    ``xi`` times coefficient factor of ``x``).
    """
    g = cat_shift() if g is None else g
    if f is None:
        N = 1 if N is None else N
        f = MultiplierF.constant(np.eye(N))
    N = f.N
    r = 2 * N
    unit = constant_factor(np.eye(N))

    def s_ppg(xi):
        return spectral_projection(xi) @ spectral_projection(g.act_xi(xi))

    def s_q(xi):
        return np.eye(2) - spectral_projection(xi)

    def s_p(xi):
        return spectral_projection(xi)

    def s_uinv(xi):
        xib = g.act_xi(xi, -1)
        a = spectral_projection(xib)
        b = spectral_projection(g.act_xi(xib))
        t = np.real(np.trace(a @ b, axis1=-2, axis2=-1))
        return (b @ a) / t[..., None, None]

    def c_inv_back(x):
        return f.inverse(g.act_x(x, -1))

    coef_f = f
    coef_finv = f.inverse
    if f.bandwidth == 0:
        coef_f = constant_factor(f.mats[0])
        coef_finv = constant_factor(np.linalg.inv(f.mats[0]))
        c_inv_back = coef_finv

    Sep = SeparableEvaluator
    return {
        "D": CrossedSymbol(r, {1: Sep([(s_ppg, coef_f)]), 0: Sep([(s_q, unit)])}),
        "B": CrossedSymbol(r, {-1: Sep([(s_uinv, c_inv_back)]), 0: Sep([(s_q, unit)])}),
        "D1": CrossedSymbol(r, {1: Sep([(s_ppg, unit)]), 0: Sep([(s_q, unit)])}),
        "D1_inv": CrossedSymbol(r, {-1: Sep([(s_uinv, unit)]), 0: Sep([(s_q, unit)])}),
        "D0": CrossedSymbol(r, {0: Sep([(s_p, coef_f), (s_q, unit)])}),
        "D0_inv": CrossedSymbol(r, {0: Sep([(s_p, coef_finv), (s_q, unit)])}),
    }


# ---------------------------------------------------------------------------
# invertibility of the shift part


@dataclass(frozen=True)
class D1Margin:
    margin: float  # min of 1 + cos(xi, dg^{-1} xi)
    min_singular_value: float  # min sigma(p(xi) on im p(dg^{-1} xi))
    argmin: np.ndarray
    sample_count: int


def d1_margin(nodes, g: Optional[ShiftMap] = None, refine: bool = True) -> D1Margin:
    """Minimum of ``1 + cos(xi, dg^{-1} xi)`` over sphere samples.

    Positive means ``p(xi)`` maps ``im p(dg^{-1} xi)`` isomorphically onto
    ``im p(xi)``; the smallest singular value of that map is reported
    too, computed from the projection matrices.  With ``refine`` the
    best few samples seed a local minimization on the sphere.
    """
    g = cat_shift() if g is None else g
    xi = normalize(np.asarray(nodes, dtype=float))
    if xi.shape[0] == 0:
        raise ValueError("empty sample set")

    def cosine(v):
        w = g.act_xi(v, -1)
        return np.sum(v * w, axis=-1)

    vals = 1.0 + cosine(xi)
    order = np.argsort(vals)
    best_val = float(vals[order[0]])
    best = xi[order[0]]
    if refine:
        from scipy.optimize import minimize

        for idx in order[:5]:
            res = minimize(lambda v: 1.0 + float(cosine(normalize(v))), xi[idx], method="Nelder-Mead",
                           options={"xatol": 1e-12, "fatol": 1e-15, "maxiter": 4000})
            if res.fun < best_val:
                best_val = float(res.fun)
                best = normalize(res.x)
    pts = np.vstack([xi, best[None]])
    pa = spectral_projection(pts)
    pb = spectral_projection(g.act_xi(pts, -1))
    sv = np.linalg.svd(pa @ pb, compute_uv=False)[:, 0]
    return D1Margin(margin=max(best_val, 0.0), min_singular_value=float(np.min(sv)),
                    argmin=best, sample_count=len(xi))


def kantorovich_d1_margin(A) -> float:
    """Closed-form ``min (1 + cos(xi, A xi))`` for symmetric ``A``.

    For positive definite ``A`` the Kantorovich inequality gives
    ``min cos = 2 sqrt(l_min l_max) / (l_min + l_max)``; with a negative
    eigenvalue the minimum cosine is -1.
    """
    lam = np.linalg.eigvalsh(np.asarray(A, dtype=float))
    if lam[0] <= 0:
        return 0.0 if lam[0] < 0 else 1.0
    return 1.0 + 2.0 * np.sqrt(lam[0] * lam[-1]) / (lam[0] + lam[-1])


# ---------------------------------------------------------------------------
# lattice operators


def lattice_modes(R: int, d: int = 3) -> np.ndarray:
    axis = np.arange(-R, R + 1)
    return np.stack(np.meshgrid(*([axis] * d), indexing="ij"), axis=-1).reshape(-1, d)


def _mode_index(k, R):
    k = np.asarray(k)
    n = 2 * R + 1
    inside = np.all(np.abs(k) <= R, axis=-1)
    idx = np.zeros(k.shape[:-1], dtype=np.int64)
    for j in range(k.shape[-1]):
        idx = idx * n + (k[..., j] + R)
    return np.where(inside, idx, -1)


@dataclass
class LatticeOperator:
    """Sparse operator on ``C^{|L_R|} (x) C^2 (x) C^N``.

    Row/column order: mode (lexicographic in ``[-R, R]^3``), then spinor,
    then coefficient.
    """

    R: int
    N: int
    which: str
    matrix: sp.csr_matrix

    @property
    def modes(self):
        return lattice_modes(self.R)

    @property
    def dim(self):
        return self.matrix.shape[0]

    def to_triplets(self, path=None):
        """Sparse-triplet text ``row col re im`` (one entry per line)."""
        coo = self.matrix.tocoo()
        lines = [f"# {self.which} R={self.R} N={self.N} dim={self.dim}"]
        lines += [f"{r} {c} {v.real:.17g} {v.imag:.17g}" for r, c, v in zip(coo.row, coo.col, coo.data)]
        text = "\n".join(lines) + "\n"
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


def _block_diag(blocks):
    return sp.block_diag(list(blocks), format="csr")


def assemble(f: MultiplierF, R: int, which: str = "D", g: Optional[ShiftMap] = None) -> LatticeOperator:
    """Assemble ``D``, ``D0``, ``D1``, ``P``, ``T`` or ``F`` on the window ``|k|_inf <= R``."""
    g = cat_shift() if g is None else g
    if R < f.bandwidth:
        raise ValueError(f"window radius {R} below bandwidth {f.bandwidth}")
    which = which.upper()
    N = f.N
    modes = lattice_modes(R)
    nm = len(modes)
    b = 2 * N
    dim = nm * b
    eye_c = np.eye(N)

    def P_op():
        blocks = np.einsum("kab,ij->kaibj", spectral_projection(modes), eye_c).reshape(nm, b, b)
        return _block_diag(blocks)

    def T_op():
        tgt = _mode_index(g.act_modes(modes), R)
        src = np.arange(nm)
        ok = tgt >= 0
        rows = (tgt[ok][:, None] * b + np.arange(b)).ravel()
        cols = (src[ok][:, None] * b + np.arange(b)).ravel()
        return sp.csr_matrix((np.ones(len(rows), dtype=complex), (rows, cols)), shape=(dim, dim))

    def F_op():
        rows, cols, vals = [], [], []
        for m, Fm in zip(f.modes, f.mats):
            tgt = _mode_index(modes + m, R)
            ok = tgt >= 0
            block = np.kron(np.eye(2), Fm)
            bi, bj = np.nonzero(block)
            for i, j in zip(bi, bj):
                rows.append(tgt[ok] * b + i)
                cols.append(np.nonzero(ok)[0] * b + j)
                vals.append(np.full(int(ok.sum()), block[i, j]))
        if not rows:
            return sp.csr_matrix((dim, dim), dtype=complex)
        return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                             shape=(dim, dim))

    I = sp.identity(dim, dtype=complex, format="csr")
    if which == "P":
        M = P_op()
    elif which == "T":
        M = T_op()
    elif which == "F":
        M = F_op()
    elif which == "D0":
        P = P_op()
        M = F_op() @ P + (I - P)
    elif which == "D1":
        P = P_op()
        M = P @ T_op() @ P + (I - P)
    elif which == "D":
        P = P_op()
        M = F_op() @ P @ T_op() @ P + (I - P)
    else:
        raise ValueError(f"unknown operator {which!r}")
    M = sp.csr_matrix(M)
    M.eliminate_zeros()
    return LatticeOperator(R=R, N=N, which=which, matrix=M)


@dataclass(frozen=True)
class D1Probe:
    smallest_singular_value: float
    subwindow_radius: int
    subwindow_modes: int
    R: int


def invertibility_probe_d1(R: int, g: Optional[ShiftMap] = None) -> D1Probe:
    """Smallest singular value of ``PTP + 1 - P`` on the interior sub-window.

    Columns are restricted to modes with ``|k|_inf <= R // 3``, whose
    image under the shift stays inside the window for the cat map.  The
    coefficient factor is the identity, so one spinor copy suffices.
    The Gram matrix couples only modes along shift orbits, so it splits
    into small blocks that are diagonalized densely.
    """
    if R < 4:
        raise ValueError("R must be at least 4")
    g = cat_shift() if g is None else g
    r = R // 3
    D = assemble(MultiplierF.constant(np.eye(1)), R, "D1", g).matrix
    modes = lattice_modes(R)
    cols_modes = np.nonzero(np.all(np.abs(modes) <= r, axis=-1))[0]
    cols = (cols_modes[:, None] * 2 + np.arange(2)).ravel()
    Dc = D[:, cols]
    G = (Dc.conj().T @ Dc).tocsr()
    ncomp, labels = connected_components(abs(G) > 0, directed=False)
    smallest = np.inf
    for c in range(ncomp):
        idx = np.nonzero(labels == c)[0]
        w = np.linalg.eigvalsh(G[idx][:, idx].toarray())
        smallest = min(smallest, float(np.sqrt(max(w[0], 0.0))))
    return D1Probe(smallest_singular_value=smallest, subwindow_radius=r,
                   subwindow_modes=len(cols_modes), R=R)


# ---------------------------------------------------------------------------
# analytic index by regularized traces


@dataclass
class AnalyticIndexResult:
    """Regularized trace estimate of the index of ``f P + 1 - P``.

    ``value`` is the extrapolated estimate; ``per_radius`` holds the raw
    window sums ``Tr K1^m - Tr K2^m`` for each radius.
    """

    value: float
    per_radius: Dict[int, float]
    tail: float
    imag_residual: float
    nearest_integer: int
    gap: float
    window_too_small: bool
    diagnostics: dict = field(default_factory=dict)


def _fft_axes():
    return (0, 1, 2)


def mode_trace_densities(f: MultiplierF, R: int, m: int = 4, probe_spacing: int = 4,
                         fft_size: Optional[int] = None, seed: int = 0, workers: int = 1,
                         batch: int = 16):
    """Diagonal entries of ``K1^m`` and ``K2^m`` for every mode ``|k|_inf <= R``.

    ``K1 = P f^{-1} (1 - P) f P`` and ``K2 = P f (1 - P) f^{-1} P`` act on
    a periodic lattice of ``L^3`` modes (FFT between Fourier and grid
    space; ``f`` and ``f^{-1}`` are multiplied on the grid).  Diagonals
    are probed with vectors supported on one residue class of modes mod
    ``probe_spacing``, carrying random phases, one probe per basis
    vector of ``im p(k) (x) C^N``.  The trace of each block over the
    spinor and coefficient indices is returned, shape ``(2R+1,)*3``.
    """
    N = f.N
    L = fft_size if fft_size is not None else 2 * R + 8 + 2 * f.bandwidth
    L += L % 2
    if L < 2 * R + 2:
        raise ValueError("periodic lattice smaller than the window")
    F = f.on_grid(L).reshape(L ** 3, N, N)
    Finv = np.linalg.inv(F)
    freqs = sfft.fftfreq(L, 1.0 / L).astype(int)
    K = np.stack(np.meshgrid(freqs, freqs, freqs, indexing="ij"), axis=-1).reshape(-1, 3)
    p = spectral_projection(K)  # (L^3, 2, 2)
    # unit vector spanning im p(k)
    w, V = np.linalg.eigh(p)
    e = V[:, :, 1]
    inwin = np.all(np.abs(K) <= R, axis=-1) & np.any(K != 0, axis=-1)
    rng = np.random.default_rng(seed)
    s = probe_spacing
    color = (np.mod(K[:, 0], s) * s + np.mod(K[:, 1], s)) * s + np.mod(K[:, 2], s)

    shape_grid = (L, L, L)

    def to_grid(v):
        return sfft.ifftn(v.reshape(shape_grid + v.shape[1:]), axes=_fft_axes(), norm="forward",
                          workers=workers).reshape(v.shape)

    def to_modes(v):
        return sfft.fftn(v.reshape(shape_grid + v.shape[1:]), axes=_fft_axes(), norm="forward",
                         workers=workers).reshape(v.shape)

    def mult(M, v):
        # v: (L^3, 2, N, nb); coefficient matrix acts on axis 2
        return np.matmul(M[:, None], v)

    def spin(v, P):
        n, _, Nc, nb = v.shape
        return np.matmul(P, v.reshape(n, 2, Nc * nb)).reshape(v.shape)

    def apply(v, first, second):
        v = spin(v, p)
        v = to_modes(mult(first, to_grid(v)))
        v = v - spin(v, p)
        v = to_modes(mult(second, to_grid(v)))
        return spin(v, p)

    d1 = np.zeros(L ** 3, dtype=complex)
    d2 = np.zeros(L ** 3, dtype=complex)
    jobs = []
    for c in range(s ** 3):
        mask = inwin & (color == c)
        if not np.any(mask):
            continue
        phase = np.exp(TWO_PI * 1j * rng.random(L ** 3)) * mask
        for bvec in range(N):
            jobs.append((mask, phase, bvec))
    for start in range(0, len(jobs), batch):
        chunk = jobs[start:start + batch]
        nb = len(chunk)
        v = np.zeros((L ** 3, 2, N, nb), dtype=complex)
        for j, (mask, phase, bvec) in enumerate(chunk):
            v[:, :, bvec, j] = e * phase[:, None]
        for (first, second), acc in (((F, Finv), d1), ((Finv, F), d2)):
            w_ = v
            for _ in range(m):
                w_ = apply(w_, first, second)
            acc += np.einsum("ksbj,ksbj->k", v.conj(), w_)
    sel = np.all(np.abs(K) <= R, axis=-1)
    n = 2 * R + 1
    # reorder to lexicographic [-R, R]^3
    order = np.argsort(_mode_index(K[sel], R))
    return (d1[sel][order].reshape(n, n, n), d2[sel][order].reshape(n, n, n),
            {"fft_size": L, "probe_spacing": s, "probes": len(jobs), "seed": seed})


def richardson_extrapolate(radii: Sequence[int], sums: Sequence[float], m: int = 4):
    """Least-squares fit ``S(R) = S_inf + a R^{-q}`` with ``q = 2m - 5``.

    Summands decay like ``|k|^{-(2m-2)}``, so the window tail in three
    dimensions decays like ``R^{-(2m-5)}``.
    """
    radii = np.asarray(radii, dtype=float)
    sums = np.asarray(sums, dtype=float)
    if len(radii) == 1:
        return float(sums[0]), 0.0
    q = 2 * m - 5
    A = np.stack([np.ones_like(radii), radii ** (-q)], axis=1)
    coef, *_ = np.linalg.lstsq(A, sums, rcond=None)
    return float(coef[0]), float(coef[1])


def analytic_index(f: MultiplierF, R=(8, 12, 16), m: int = 4, probe_spacing: int = 4,
                   fft_size: Optional[int] = None, seed: int = 0, workers: int = 1,
                   safety: int = 2) -> AnalyticIndexResult:
    """Index of ``f P + 1 - P`` (equal to that of ``D``) by regularized traces.

    Computes ``Tr (P - T_{f^{-1}} T_f)^m - Tr (P - T_f T_{f^{-1}})^m``
    restricted to the windows ``|k|_inf <= R`` for every radius in ``R``
    from one set of probes, and extrapolates in ``R``.

    Parameters
    ----------
    R : int or sequence of int
        Window radii.  The largest sets the probed region.
    m : int
        Trace power, at least 4 (trace class in three dimensions).
    """
    radii = sorted({int(R)} if np.isscalar(R) else {int(r) for r in R})
    if not radii:
        raise ValueError("empty radius list")
    if m < 4:
        raise ValueError("trace power m must be >= 4 in three dimensions")
    if radii[0] < m * f.bandwidth + safety:
        raise ValueError(f"radius {radii[0]} below m*bandwidth + safety = {m * f.bandwidth + safety}")
    Rmax = radii[-1]
    d1, d2, info = mode_trace_densities(f, Rmax, m, probe_spacing, fft_size, seed, workers)
    diff = d1 - d2
    kabs = np.max(np.abs(lattice_modes(Rmax)), axis=-1).reshape(diff.shape)
    per_radius = {}
    imag = 0.0
    for r in radii:
        tot = diff[kabs <= r].sum()
        per_radius[r] = float(tot.real)
        imag = max(imag, abs(float(tot.imag)))
    value, slope = richardson_extrapolate(radii, [per_radius[r] for r in radii], m)
    tail = float(diff[kabs == Rmax].sum().real)
    nearest = int(np.rint(value))
    return AnalyticIndexResult(
        value=value, per_radius=per_radius, tail=tail, imag_residual=imag,
        nearest_integer=nearest, gap=abs(value - nearest), window_too_small=abs(tail) > 0.4,
        diagnostics=dict(info, m=m, extrapolation_slope=slope,
                         trace_K1=float(d1.sum().real), trace_K2=float(d2.sum().real)))
