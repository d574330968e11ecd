"""Metric route: Laplacians, the harmonic tower, Delta-tilde^(r)_h and FAVB scans.

All operators are built in orthonormal coordinates u_w = G^{1/2} u, where
adjoints are conjugate transposes, and converted back to model coordinates
(X = G^{-1/2} X_w G^{1/2}) only at the public boundary. The Hermitian square
root keeps a conjugation-invariant metric conjugation-invariant, so the
conjugation matrices of the model are valid in both coordinate systems.

Tower recursion, per bidegree:

    Delta^(1) = Delta'',  p_j = projector onto ker Delta^(j),
    G_j       = Green(Delta^(j)) delbar^* del        ((p,q) -> (p+1,q-1)),
    D_j       = G_1 G_2 ... G_j                      (G_j applied first),
    d_j^(w)   = p_j del D_{j-1} p_j,
    Delta^(j+1) = (del D_{j-1} p_j)(...)^* + (p_j del D_{j-1})^*(...) + Delta^(j).
"""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from contextvars import copy_context
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .bicomplex import Bicomplex, Bideg, Form, betti, cohomology_dim, d_h_total, delbar_total, del_total
from .errors import CapabilityError, DomainError, PreconditionError, StructureError
from .numerics import (
    adj,
    contained_in,
    green,
    hermitian_eigh,
    kernel_basis,
    kernel_cutoff,
    null_space,
    orth,
    projector,
    tolerances,
)

H_MAX = 10.0


# ----------------------------------------------------------------- metric


@dataclass(frozen=True, eq=False)
class MetricData:
    """Gram matrix per bidegree; bidegrees not listed use the identity."""

    grams: Mapping[Bideg, np.ndarray] = field(default_factory=dict)

    def gram(self, p: int, q: int, dim: int) -> np.ndarray:
        g = self.grams.get((p, q))
        return np.eye(dim, dtype=np.complex128) if g is None else np.asarray(g, dtype=np.complex128)

    def validate(self, B: Bicomplex) -> None:
        for (p, q), g in self.grams.items():
            g = np.asarray(g)
            if g.shape != (B.dim(p, q), B.dim(p, q)):
                raise StructureError(f"Gram matrix at {(p, q)} has shape {g.shape}")
            if np.abs(g - adj(g)).max(initial=0.0) > 1e-12 * (1 + np.abs(g).max(initial=0.0)):
                raise DomainError(f"Gram matrix at {(p, q)} is not Hermitian")
            if g.size and np.linalg.eigvalsh(0.5 * (g + adj(g))).min() <= 0:
                raise DomainError(f"Gram matrix at {(p, q)} is not positive definite")

    def conjugation_invariant(self, model) -> bool:
        for (p, q) in model.grading.all_bidegrees():
            c = model.conjugation[(p, q)]
            gp = self.gram(p, q, model.grading.dim(p, q))
            gq = self.gram(q, p, model.grading.dim(q, p))
            if np.abs(c @ gp.conj() @ c.T - gq).max(initial=0.0) > 1e-10:
                return False
        return True


def adjoint(op: np.ndarray, gram_src: np.ndarray | None = None, gram_tgt: np.ndarray | None = None) -> np.ndarray:
    """A^* = G_src^{-1} A^H G_tgt for A: src -> tgt."""
    op = np.asarray(op, dtype=np.complex128)
    m, n = op.shape
    if gram_src is not None and gram_src.shape != (n, n):
        raise StructureError(f"source Gram {gram_src.shape} does not match operator {op.shape}")
    if gram_tgt is not None and gram_tgt.shape != (m, m):
        raise StructureError(f"target Gram {gram_tgt.shape} does not match operator {op.shape}")
    out = adj(op)
    if gram_tgt is not None:
        out = out @ gram_tgt
    if gram_src is not None:
        out = np.linalg.solve(gram_src, out)
    return out


def _sqrtm(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    w, v = hermitian_eigh(g)
    return (v * np.sqrt(w)) @ adj(v), (v / np.sqrt(w)) @ adj(v)


@dataclass(frozen=True, eq=False)
class _Ctx:
    B: Bicomplex
    Bw: Bicomplex
    model: object | None
    W: dict | None
    Winv: dict | None

    def to_model(self, x: np.ndarray, src: Bideg, tgt: Bideg) -> np.ndarray:
        if self.W is None or x.size == 0:
            return x
        return self.Winv[tgt] @ x @ self.W[src]

    def total_w(self, k: int, inverse: bool = False) -> np.ndarray:
        g = self.B.grading
        mats = [(self.Winv if inverse else self.W)[bd] for bd in g.bidegrees(k)]
        out = np.zeros((g.total_dim(k), g.total_dim(k)), dtype=np.complex128)
        for bd, s in g.offsets(k).items():
            out[s, s] = (self.Winv if inverse else self.W)[bd]
        return out

    def total_to_model(self, x: np.ndarray, k_src: int, k_tgt: int) -> np.ndarray:
        if self.W is None or x.size == 0:
            return x
        return self.total_w(k_tgt, inverse=True) @ x @ self.total_w(k_src)

    def vec_to_w(self, v: np.ndarray, bd: Bideg) -> np.ndarray:
        return v if self.W is None else self.W[bd] @ v

    def vec_from_w(self, v: np.ndarray, bd: Bideg) -> np.ndarray:
        return v if self.W is None else self.Winv[bd] @ v


def _split(M) -> tuple[Bicomplex, object | None]:
    if isinstance(M, Bicomplex):
        return M, None
    return M.bicomplex, M


def _ctx(M, metric: MetricData | None) -> _Ctx:
    B, model = _split(M)
    if metric is None:
        return _Ctx(B, B, model, None, None)

    def build():
        metric.validate(B)
        W, Winv = {}, {}
        for bd in B.grading.all_bidegrees():
            d = B.dim(*bd)
            W[bd], Winv[bd] = _sqrtm(metric.gram(*bd, d)) if d else (np.zeros((0, 0)), np.zeros((0, 0)))
        partial = {(p, q): W[(p + 1, q)] @ m @ Winv[(p, q)] for (p, q), m in B.partial.items() if (p + 1, q) in W}
        partialbar = {
            (p, q): W[(p, q + 1)] @ m @ Winv[(p, q)] for (p, q), m in B.partialbar.items() if (p, q + 1) in W
        }
        return _Ctx(B, Bicomplex(B.grading, partial, partialbar), model, W, Winv)

    return B.memo(("ctx", metric), build)


def _zeros(rows: int, cols: int) -> np.ndarray:
    return np.zeros((rows, cols), dtype=np.complex128)


# -------------------------------------------------------------- Laplacians


def _check_h(h: complex) -> complex:
    h = complex(h)
    if abs(h) > H_MAX:
        raise DomainError(f"|h| = {abs(h):.3g} exceeds the conditioning guard {H_MAX}")
    return h


def _dh_w(ctx: _Ctx, h: complex, k: int) -> np.ndarray:
    g = ctx.B.grading
    if k < 0:
        return _zeros(g.total_dim(0), 0)
    if k >= 2 * ctx.B.n:
        return _zeros(0, g.total_dim(k))
    return d_h_total(ctx.Bw, h, k)


def _laplacian_w(ctx: _Ctx, h: complex, k: int) -> np.ndarray:
    d_out = _dh_w(ctx, h, k)
    d_in = _dh_w(ctx, h, k - 1)
    return d_in @ adj(d_in) + adj(d_out) @ d_out


def _check_k(B: Bicomplex, k: int) -> None:
    if not 0 <= k <= 2 * B.n:
        raise DomainError(f"degree {k} outside 0..{2 * B.n}")


def laplacian_h(M, h: complex, k: int, metric: MetricData | None = None) -> np.ndarray:
    """Delta_h = d_h d_h^* + d_h^* d_h on total degree k."""
    ctx = _ctx(M, metric)
    _check_k(ctx.B, k)
    return ctx.total_to_model(_laplacian_w(ctx, _check_h(h), k), k, k)


def _delbar_lap_w(Bw: Bicomplex, p: int, q: int) -> np.ndarray:
    a_in = Bw.delbar_at(p, q - 1)
    a_out = Bw.delbar_at(p, q)
    return a_in @ adj(a_in) + adj(a_out) @ a_out


def _del_lap_w(Bw: Bicomplex, p: int, q: int) -> np.ndarray:
    a_in = Bw.del_at(p - 1, q)
    a_out = Bw.del_at(p, q)
    return a_in @ adj(a_in) + adj(a_out) @ a_out


# ----------------------------------------------------------------- tower


@dataclass(frozen=True, eq=False)
class HarmonicTower:
    """Levels are 1-based: laplacians[j] is Delta^(j), projections[j] is p_j, D[j] is D_j."""

    r_max: int
    n: int
    laplacians: Mapping[int, Mapping[Bideg, np.ndarray]]
    projections: Mapping[int, Mapping[Bideg, np.ndarray]]
    bases: Mapping[int, Mapping[Bideg, np.ndarray]]
    greens: Mapping[int, Mapping[Bideg, np.ndarray]]
    D: Mapping[int, Mapping[Bideg, np.ndarray]]
    d_omega_w: Mapping[int, Mapping[Bideg, np.ndarray]]
    _ctx: _Ctx = field(repr=False)

    # whitened accessors (internal); out-of-square bidegrees give empty matrices
    def _p(self, j: int, bd: Bideg) -> np.ndarray:
        d = self._ctx.B.dim(*bd)
        return self.projections[j].get(bd, _zeros(d, d))

    def _D(self, j: int, bd: Bideg) -> np.ndarray:
        g = self._ctx.B.grading
        tgt = (bd[0] + j, bd[1] - j)
        m = self.D[j].get(bd)
        return m if m is not None else _zeros(g.dim(*tgt), g.dim(*bd))

    def _green(self, j: int, bd: Bideg) -> np.ndarray:
        d = self._ctx.B.dim(*bd)
        return self.greens[j].get(bd, _zeros(d, d))

    # public accessors in model coordinates
    def dim(self, r: int, p: int, q: int) -> int:
        b = self.bases[r].get((p, q))
        return 0 if b is None else b.shape[1]

    def basis(self, r: int, p: int, q: int) -> np.ndarray:
        return self._ctx.vec_from_w(self.bases[r][(p, q)], (p, q))

    def projection(self, r: int, p: int, q: int) -> np.ndarray:
        return self._ctx.to_model(self._p(r, (p, q)), (p, q), (p, q))

    def laplacian(self, r: int, p: int, q: int) -> np.ndarray:
        return self._ctx.to_model(self.laplacians[r][(p, q)], (p, q), (p, q))

    def green_operator(self, r: int, p: int, q: int) -> np.ndarray:
        return self._ctx.to_model(self._green(r, (p, q)), (p, q), (p, q))

    def d_omega(self, r: int, p: int, q: int) -> np.ndarray:
        tgt = (p + r, q - r + 1)
        m = self.d_omega_w[r].get((p, q))
        if m is None:
            m = _zeros(self._ctx.B.dim(*tgt), self._ctx.B.dim(p, q))
        return self._ctx.to_model(m, (p, q), tgt)

    def D_operator(self, j: int, p: int, q: int) -> np.ndarray:
        return self._ctx.to_model(self._D(j, (p, q)), (p, q), (p + j, q - j))


def _in_square(bd: Bideg, n: int) -> bool:
    return 0 <= bd[0] <= n and 0 <= bd[1] <= n


def _build_tower(ctx: _Ctx, r_max: int) -> HarmonicTower:
    Bw = ctx.Bw
    n = Bw.n
    g = Bw.grading
    bds = g.all_bidegrees()
    laps, projs, bases, greens, Ds, dws = {}, {}, {}, {}, {}, {}
    laps[1] = {bd: _delbar_lap_w(Bw, *bd) for bd in bds}
    Ds[0] = {bd: np.eye(g.dim(*bd), dtype=np.complex128) for bd in bds}

    def D_at(j, bd):
        m = Ds[j].get(bd)
        return m if m is not None else _zeros(g.dim(bd[0] + j, bd[1] - j), g.dim(*bd))

    def P_at(j, bd):
        d = g.dim(*bd)
        return projs[j].get(bd, _zeros(d, d))

    def G_at(j, bd):
        d = g.dim(*bd)
        return greens[j].get(bd, _zeros(d, d))

    for j in range(1, r_max + 1):
        bases[j] = {bd: kernel_basis(laps[j][bd]) for bd in bds}
        projs[j] = {bd: projector(bases[j][bd]) for bd in bds}
        greens[j] = {bd: green(laps[j][bd]) for bd in bds}

        # A_j(p,q) = del D_{j-1} p_j : (p,q) -> (p+j, q-j+1);  Bop_j = p_j del D_{j-1}
        A, Bop, dw = {}, {}, {}
        for p, q in bds:
            mid = (p + j - 1, q - j + 1)
            tgt = (p + j, q - j + 1)
            core = Bw.del_at(*mid) @ D_at(j - 1, (p, q))
            A[(p, q)] = core @ P_at(j, (p, q))
            Bop[(p, q)] = P_at(j, tgt) @ core
            dw[(p, q)] = Bop[(p, q)] @ P_at(j, (p, q))
        dws[j] = dw
        if j == r_max:
            break

        nxt = {}
        for p, q in bds:
            src = (p - j, q + j - 1)
            a_in = A.get(src) if _in_square(src, n) else _zeros(g.dim(p, q), 0)
            b_out = Bop[(p, q)]
            nxt[(p, q)] = a_in @ adj(a_in) + adj(b_out) @ b_out + laps[j][(p, q)]
        laps[j + 1] = nxt

        # D_j(p,q) = D_{j-1}(p+1,q-1) G_j(p,q),  G_j = Green(Delta^(j)) delbar^* del
        Dj = {}
        for p, q in bds:
            down = (p + 1, q - 1)
            gj = G_at(j, down) @ adj(Bw.delbar_at(*down)) @ Bw.del_at(p, q)
            Dj[(p, q)] = D_at(j - 1, down) @ gj
        Ds[j] = Dj

    return HarmonicTower(r_max, n, laps, projs, bases, greens, Ds, dws, ctx)


def harmonic_tower(M, r_max: int, metric: MetricData | None = None) -> HarmonicTower:
    if r_max < 1:
        raise DomainError("r_max must be >= 1")
    ctx = _ctx(M, metric)
    cap = ctx.B.n + 2  # Delta^(n+2) is the first level that cannot change any more
    if r_max > cap:
        warnings.warn(f"r_max = {r_max} clamped to {cap}: pages stabilise by n+1", stacklevel=2)
        r_max = cap
    return ctx.B.memo(("tower", metric, r_max), lambda: _build_tower(ctx, r_max))


# ----------------------------------------------------- deformed operators


def _require_conjugation(ctx: _Ctx, metric: MetricData | None):
    if ctx.model is None:
        raise CapabilityError("this operator needs the conjugation of an ExteriorModel, not a bare bicomplex")
    if metric is not None and not metric.conjugation_invariant(ctx.model):
        raise CapabilityError("conjugates of p_r and D_r need a conjugation-invariant metric")
    return ctx.model


def _conj_at(model, op_at: Callable[[int, int], np.ndarray], shift: int, g) -> Callable[[Bideg], np.ndarray]:
    def at(bd: Bideg) -> np.ndarray:
        a, b = bd
        src, tgt = g.dim(a, b), g.dim(a - shift, b + shift)
        if src == 0 or tgt == 0:
            return _zeros(tgt, src)
        return model.conjugation[(b + shift, a - shift)] @ op_at(b, a).conj() @ model.conjugation[(a, b)]

    return at


def _level_ops(ctx: _Ctx, r: int, metric: MetricData | None):
    """p_r, D_{r-1} and their conjugates as functions of the source bidegree (whitened)."""
    g = ctx.B.grading
    Bw = ctx.Bw
    if r == 1:
        def p(bd):
            return projector(kernel_basis(_delbar_lap_w(Bw, *bd))) if _in_square(bd, g.n) else _zeros(0, 0)

        def pbar(bd):
            # p' = projector onto ker Delta' (equals conj p'' conj for conjugation-invariant metrics)
            return projector(kernel_basis(_del_lap_w(Bw, *bd))) if _in_square(bd, g.n) else _zeros(0, 0)

        def D(bd):
            return np.eye(g.dim(*bd), dtype=np.complex128)

        return p, pbar, D, D
    tower = harmonic_tower(ctx.model if ctx.model is not None else ctx.B, r, metric)
    model = _require_conjugation(ctx, metric)

    def p(bd):
        return tower._p(r, bd)

    def D(bd):
        return tower._D(r - 1, bd)

    pbar = _conj_at(model, lambda a, b: tower._p(r, (a, b)), 0, g)
    Dbar = _conj_at(model, lambda a, b: tower._D(r - 1, (a, b)), r - 1, g)
    return p, pbar, D, Dbar


def _assemble(g, k_src: int, k_tgt: int, pieces: Callable[[Bideg], list[tuple[Bideg, np.ndarray]]]) -> np.ndarray:
    out = _zeros(g.total_dim(k_tgt), g.total_dim(k_src))
    if out.size == 0:
        return out
    so, to = g.offsets(k_src), g.offsets(k_tgt)
    for bd, s in so.items():
        for tbd, m in pieces(bd):
            if tbd in to and m.size:
                out[to[tbd], s] += m
    return out


def _xy_w(ctx: _Ctx, r: int, h: complex, k: int, metric):
    """X_r (degree k-1 -> k) and Y_r (degree k -> k+1) in whitened coordinates."""
    g = ctx.B.grading
    Bw = ctx.Bw
    p, pbar, D, Dbar = _level_ops(ctx, r, metric)

    def x_pieces(bd):
        a, b = bd
        t1 = (a + r, b - r + 1)
        t2 = (a - r + 1, b + r)
        m1 = Bw.del_at(a + r - 1, b - r + 1) @ D(bd) @ p(bd)
        m2 = h * (Bw.delbar_at(a - r + 1, b + r - 1) @ Dbar(bd) @ pbar(bd))
        return [(t1, m1), (t2, m2)]

    def y_pieces(bd):
        a, b = bd
        t1 = (a + r, b - r + 1)
        t2 = (a - r + 1, b + r)
        m1 = p(t1) @ Bw.del_at(a + r - 1, b - r + 1) @ D(bd) if _in_square(t1, g.n) else None
        m2 = h * (pbar(t2) @ Bw.delbar_at(a - r + 1, b + r - 1) @ Dbar(bd)) if _in_square(t2, g.n) else None
        return [(t, m) for t, m in ((t1, m1), (t2, m2)) if m is not None]

    x = _assemble(g, k - 1, k, x_pieces) if k >= 1 else _zeros(g.total_dim(k), 0)
    y = _assemble(g, k, k + 1, y_pieces) if k < 2 * g.n else _zeros(0, g.total_dim(k))
    return x, y


def _tilde_w(ctx: _Ctx, r: int, h: complex, k: int, metric) -> np.ndarray:
    if r == 1:
        return _laplacian_w(ctx, h, k)
    key = ("tilde_w", metric, r, h, k)

    def build():
        x, y = _xy_w(ctx, r - 1, h, k, metric)
        return x @ adj(x) + adj(y) @ y + _tilde_w(ctx, r - 1, h, k, metric)

    return ctx.B.memo(key, build)


def tilde_laplacian_2_h(M, h: complex, k: int, metric: MetricData | None = None) -> np.ndarray:
    """(del p'' + h delbar p')(..)^* + (p'' del + h p' delbar)^*(..) + Delta_h on degree k."""
    ctx = _ctx(M, metric)
    _check_k(ctx.B, k)
    return ctx.total_to_model(_tilde_w(ctx, 2, _check_h(h), k, metric), k, k)


def tilde_laplacian_r_h(M, r: int, h: complex, k: int, metric: MetricData | None = None) -> np.ndarray:
    """Delta-tilde^(r)_h on total degree k; r = 1 is Delta_h, r = 2 is Delta-tilde_h."""
    ctx = _ctx(M, metric)
    _check_k(ctx.B, k)
    if r < 1:
        raise DomainError("r must be >= 1")
    if r >= 3:
        _require_conjugation(ctx, metric)
    return ctx.total_to_model(_tilde_w(ctx, r, _check_h(h), k, metric), k, k)


def kernel_w(M, r: int, h: complex, k: int, metric: MetricData | None = None) -> np.ndarray:
    """Orthonormal kernel basis of Delta-tilde^(r)_h in orthonormal (whitened) coordinates."""
    ctx = _ctx(M, metric)
    if r >= 3:
        _require_conjugation(ctx, metric)
    return kernel_basis(_tilde_w(ctx, r, _check_h(h), k, metric))


def image_dh_w(M, h: complex, k: int, metric: MetricData | None = None, adjoint_side: bool = False) -> np.ndarray:
    """Orthonormal basis of Im d_h (into degree k) or Im d_h^* (into degree k), whitened."""
    ctx = _ctx(M, metric)
    if adjoint_side:
        return orth(adj(_dh_w(ctx, complex(h), k)))
    return orth(_dh_w(ctx, complex(h), k - 1))


def _block_diag_w(ctx: _Ctx, tower: HarmonicTower, r: int, k: int) -> np.ndarray:
    g = ctx.B.grading
    out = _zeros(g.total_dim(k), g.total_dim(k))
    for bd, s in g.offsets(k).items():
        out[s, s] = tower.laplacians[r][bd]
    return out


# ---------------------------------------------------------------- Neumann


def neumann_tower(M, alpha: Form, r: int, metric: MetricData | None = None) -> tuple[Form, ...]:
    """u_l = G_{r-l} ... G_{r-1} alpha with G_j = Green(Delta^(j)) delbar^* del."""
    from .spectral import er_closed_space

    ctx = _ctx(M, metric)
    B = ctx.B
    bds = alpha.bidegrees()
    if len(bds) > 1:
        raise DomainError("alpha must be of pure bidegree")
    if not bds:
        bds = [next(iter(alpha.components))]
    p, q = bds[0]
    if r < 1:
        raise DomainError("r must be >= 1")
    a = alpha.component(p, q)
    z = er_closed_space(B, p, q, r)
    res = float(np.linalg.norm(a - z @ (adj(z) @ a))) if z.size else float(np.linalg.norm(a))
    if res > tolerances().subspace * (1 + np.linalg.norm(a)):
        raise PreconditionError(f"alpha is not E_{r}-closed at {(p, q)}", res)
    if r == 1:
        return ()
    tower = harmonic_tower(M, r - 1, metric)
    u = ctx.vec_to_w(a, (p, q))
    out = []
    cur = (p, q)
    for l in range(1, r):
        j = r - l
        down = (cur[0] + 1, cur[1] - 1)
        gj = tower._green(j, down) @ adj(ctx.Bw.delbar_at(*down)) @ ctx.Bw.del_at(*cur)
        u = gj @ u
        cur = down
        out.append(Form(p + q, {cur: ctx.vec_from_w(u, cur)}))
    return tuple(out)


# ------------------------------------------------------------- 3-space


@dataclass(frozen=True, eq=False)
class ThreeSpaceDecomposition:
    r: int
    p: int
    q: int
    kernel: np.ndarray
    image: np.ndarray
    coimage: np.ndarray
    kernel_characterisation: np.ndarray  # basis of the intersection of kernels in part (i)

    @property
    def ranks(self) -> tuple[int, int, int]:
        def rk(P):
            return int(round(np.trace(P).real)) if P.size else 0

        return rk(self.kernel), rk(self.image), rk(self.coimage)

    def defects(self) -> dict[str, float]:
        n = self.kernel.shape[0]
        P = [self.kernel, self.image, self.coimage]
        out = {"sum": float(np.linalg.norm(sum(P) - np.eye(n))) if n else 0.0}
        names = ["kernel", "image", "coimage"]
        for i in range(3):
            for j in range(i + 1, 3):
                out[f"{names[i]}*{names[j]}"] = float(np.linalg.norm(P[i] @ P[j])) if n else 0.0
        return out


def three_space_decomposition(M, r: int, p: int, q: int, metric: MetricData | None = None) -> ThreeSpaceDecomposition:
    """ker Delta^(r+1) + (Im delbar + sum Im del D_{j-1} p_j) + (Im delbar^* + sum Im (p_j del D_{j-1})^*)."""
    ctx = _ctx(M, metric)
    B, Bw = ctx.B, ctx.Bw
    if r < 0:
        raise DomainError("r must be >= 0")
    d = B.dim(p, q)
    if d == 0:
        raise DomainError(f"bidegree {(p, q)} is empty")
    tower = harmonic_tower(M, r + 1, metric)
    img = [Bw.delbar_at(p, q - 1)]
    coimg = [adj(Bw.delbar_at(p, q))]
    kernel_eqs = [Bw.delbar_at(p, q), adj(Bw.delbar_at(p, q - 1))]
    for j in range(1, r + 1):
        src = (p - j, q + j - 1)
        tgt = (p + j, q - j + 1)
        if _in_square(src, B.n):
            a_src = Bw.del_at(src[0] + j - 1, src[1] - j + 1) @ tower._D(j - 1, src) @ tower._p(j, src)
            img.append(a_src)
            kernel_eqs.append(adj(a_src))
        b_here = tower._p(j, tgt) @ Bw.del_at(p + j - 1, q - j + 1) @ tower._D(j - 1, (p, q)) if _in_square(
            tgt, B.n
        ) else _zeros(0, d)
        coimg.append(adj(b_here))
        kernel_eqs.append(b_here)
    kern = tower.bases[r + 1][(p, q)]
    P_img = projector(orth(np.hstack(img)))
    P_co = projector(orth(np.hstack(coimg)))
    char = null_space(np.vstack(kernel_eqs))

    def conv(P):
        return ctx.to_model(P, (p, q), (p, q))

    return ThreeSpaceDecomposition(
        r, p, q, conv(projector(kern)), conv(P_img), conv(P_co), ctx.vec_from_w(char, (p, q))
    )


# ------------------------------------------------------------------ scans


def default_h_grid() -> list[complex]:
    grid = [0j]
    for j in range(7):
        s = 2.0**-j
        grid += [complex(s), complex(-s), complex(0, s), complex(0, -s)]
    return grid


@dataclass(frozen=True)
class FavbPoint:
    h: complex
    kernel_dim: int
    lambda_bk: float | None
    lambda_bk_plus_1: float | None

    @property
    def gap(self) -> float | None:
        if self.lambda_bk_plus_1 is None:
            return None
        return self.lambda_bk_plus_1 - (self.lambda_bk or 0.0)


@dataclass(frozen=True)
class FavbScanReport:
    k: int
    r: int
    b_k: int
    points: tuple[FavbPoint, ...]

    @property
    def jumps(self) -> tuple[complex, ...]:
        return tuple(pt.h for pt in self.points if pt.kernel_dim != self.b_k)

    @property
    def constant_rank(self) -> bool:
        return not self.jumps


def parallel_map(fn: Callable, items: Sequence, jobs: int | None = None) -> list:
    """Ordered map, optionally threaded; each task runs in a copy of the caller's context."""
    if not jobs or jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    ctx = copy_context()
    with ThreadPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(lambda x: ctx.copy().run(fn, x), items))


def favb_scan(
    M, k: int, r: int, h_grid: Sequence[complex] | None = None, metric: MetricData | None = None, jobs: int | None = None
) -> FavbScanReport:
    """Kernel dimension and eigenvalues lambda_{b_k}, lambda_{b_k+1} of Delta-tilde^(r)_h along an h-grid."""
    ctx = _ctx(M, metric)
    _check_k(ctx.B, k)
    grid = list(default_h_grid() if h_grid is None else h_grid)
    if not grid:
        raise DomainError("empty h-grid")
    for h in grid:
        _check_h(h)
    if r >= 3:
        _require_conjugation(ctx, metric)
        harmonic_tower(M, r - 1, metric)  # build once before threads fan out
    b_k = betti(ctx.B)[k]

    def one(h):
        w, _ = hermitian_eigh(_tilde_w(ctx, r, complex(h), k, metric))
        lam_max = float(abs(w).max()) if w.size else 0.0
        dim = int(np.sum(w < kernel_cutoff(lam_max)))
        lb = float(w[b_k - 1]) if 1 <= b_k <= w.size else None
        lb1 = float(w[b_k]) if b_k < w.size else None
        return FavbPoint(complex(h), dim, lb, lb1)

    return FavbScanReport(k, r, b_k, tuple(parallel_map(one, grid, jobs)))


# ------------------------------------------------------------ family scan


@dataclass(frozen=True)
class FamilyRow:
    t: complex
    h: complex
    kernel_dim: int
    degen_page: int


@dataclass(frozen=True)
class FamilyScanReport:
    family: str
    k: int
    r: int
    b_k: int
    rows: tuple[FamilyRow, ...]
    hodge: Mapping[complex, Mapping[Bideg, int]]
    constant_rank: bool
    hodge_usc: bool
    e1_open: bool | None  # None when E_1 fails at the base point (nothing to check)


def family_scan(
    fam, k: int, h_grid: Sequence[complex] | None = None, t_grid: Sequence[complex] | None = None, jobs: int | None = None
) -> FamilyScanReport:
    """Fibre dimensions of the relative FAVB over (h, t)."""
    from .errors import IntegrabilityError
    from .models import build_model, family_at
    from .spectral import degeneration_page, page_cell, page_totals

    hs = list(default_h_grid() if h_grid is None else h_grid)
    ts = list([0j] if t_grid is None else t_grid)
    if not hs or not ts:
        raise DomainError("empty grid")

    def build(t):
        spec = family_at(fam, t)
        try:
            return build_model(spec)
        except IntegrabilityError as exc:
            raise IntegrabilityError(f"family {fam.name} is not integrable at t = {complex(t)}: {exc}") from exc

    models = parallel_map(build, ts, jobs)
    pages = [degeneration_page(m.bicomplex) for m in models]
    r_fam = max(pages)
    b = betti(models[0].bicomplex)
    if k < 0 or k > 2 * fam.n:
        raise DomainError(f"degree {k} outside 0..{2 * fam.n}")

    def cell(i):
        t, m = ts[i], models[i]
        B = m.bicomplex
        rows = []
        for h in hs:
            h = _check_h(h)
            if h == 0:
                dim = page_totals(B, r_fam)[k]
            else:
                dim = cohomology_dim(B, k, h)
            rows.append(FamilyRow(complex(t), h, dim, pages[i]))
        hodge = {bd: page_cell(B, *bd, 1).dim for bd in B.grading.all_bidegrees()}
        return rows, hodge

    results = parallel_map(cell, list(range(len(ts))), jobs)
    rows = tuple(row for rs, _ in results for row in rs)
    hodge = {complex(t): hd for t, (_, hd) in zip(ts, results)}
    i0 = int(np.argmin([abs(t) for t in ts]))
    base = results[i0][1]
    usc = all(base[bd] >= hd[bd] for _, hd in results for bd in base)
    e1_open = None if pages[i0] != 1 else all(pg == 1 for pg in pages)
    const = all(row.kernel_dim == b[k] for row in rows)
    return FamilyScanReport(fam.name, k, r_fam, b[k], rows, hodge, const, usc, e1_open)
