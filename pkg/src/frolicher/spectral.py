"""Frölicher spectral sequence pages through explicit tower systems.

E_r-closedness of alpha in C^{p,q} means there are u_1..u_{r-1},
u_l in C^{p+l,q-l}, with

    delbar alpha = 0,  del alpha = delbar u_1,  del u_l = delbar u_{l+1}.

E_r-exactness means alpha = del zeta + delbar xi with zeta in C^{p-1,q} and
a tower  delbar zeta = del v_{r-3},  delbar v_{r-3} = del v_{r-4}, ...,
delbar v_0 = 0, where v_j sits in C^{p-r+1+j, q+r-2-j}.  r = 1 drops zeta,
r = 2 asks delbar zeta = 0. Both spaces are read off stacked block systems.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .bicomplex import Bicomplex, Bideg, Form, betti, cohomology, validate_bicomplex
from .errors import DomainError, NumericalError, PreconditionError
from .numerics import adj, block, lstsq, null_space, orth, projector, rank, tolerances, zero_cutoff


# ---------------------------------------------------------------- systems


def _closed_blocks(B: Bicomplex, p: int, q: int, r: int):
    """Block system for (alpha, u_1..u_{r-1}); returns (A_alpha, A_u, unknown bidegrees)."""
    unknowns = [(p + l, q - l) for l in range(1, r)]
    col_dims = [B.dim(*bd) for bd in unknowns]
    row_bds = [(p, q + 1), (p + 1, q)] + [(p + l + 1, q - l) for l in range(1, r - 1)]
    row_bds = row_bds[: max(r, 1)]
    row_dims = [B.dim(*bd) for bd in row_bds]
    n_alpha = B.dim(p, q)

    a_alpha = np.zeros((sum(row_dims), n_alpha), dtype=np.complex128)
    offs = np.cumsum([0] + row_dims)
    a_alpha[offs[0] : offs[1]] = B.delbar_at(p, q)
    if r >= 2:
        a_alpha[offs[1] : offs[2]] = B.del_at(p, q)

    rows: list[list[np.ndarray | None]] = [[None] * len(unknowns) for _ in row_bds]
    if r >= 2:
        rows[1][0] = -B.delbar_at(p + 1, q - 1)
    for l in range(1, r - 1):
        # del u_l - delbar u_{l+1} = 0
        rows[l + 1][l - 1] = B.del_at(p + l, q - l)
        rows[l + 1][l] = -B.delbar_at(p + l + 1, q - l - 1)
    a_u = block(rows, row_dims, col_dims)
    return a_alpha, a_u, unknowns


def _exact_blocks(B: Bicomplex, p: int, q: int, r: int):
    """Constraint system on (zeta, v_{r-3}, .., v_0): returns (C_zeta, C_v, v bidegrees)."""
    zeta_bd = (p - 1, q)
    v_bds = [(p - 2 - j, q + 1 + j) for j in range(r - 2)]  # v_{r-3}, v_{r-4}, ..., v_0
    col_dims = [B.dim(*bd) for bd in v_bds]
    # equations: delbar zeta - del v_{r-3} = 0; delbar v_j' - del v_{next} = 0; delbar v_0 = 0
    row_bds = [(p - 1, q + 1)] + [(bd[0], bd[1] + 1) for bd in v_bds]
    row_dims = [B.dim(*bd) for bd in row_bds]
    c_zeta = np.zeros((sum(row_dims), B.dim(*zeta_bd)), dtype=np.complex128)
    c_zeta[: row_dims[0]] = B.delbar_at(*zeta_bd)
    rows: list[list[np.ndarray | None]] = [[None] * len(v_bds) for _ in row_bds]
    if v_bds:
        rows[0][0] = -B.del_at(*v_bds[0])
    for j, bd in enumerate(v_bds):
        rows[j + 1][j] = B.delbar_at(*bd)
        if j + 1 < len(v_bds):
            rows[j + 1][j + 1] = -B.del_at(*v_bds[j + 1])
    c_v = block(rows, row_dims, col_dims)
    return c_zeta, c_v, v_bds


def _residual_complement(a_target: np.ndarray, a_free: np.ndarray) -> np.ndarray:
    """(I - P_{im a_free}) a_target: vanishes exactly on vectors that a_free can compensate."""
    if a_free.shape[1] == 0 or a_free.shape[0] == 0:
        return a_target
    q = orth(a_free)
    return a_target - q @ (adj(q) @ a_target)


def _check_r(r: int) -> None:
    if r < 1:
        raise DomainError("page index r must be >= 1")


def er_closed_space(B: Bicomplex, p: int, q: int, r: int) -> np.ndarray:
    """Orthonormal basis of Z_r^{p,q}."""
    _check_r(r)

    def build():
        if B.dim(p, q) == 0:
            return np.zeros((0, 0), dtype=np.complex128)
        a_alpha, a_u, _ = _closed_blocks(B, p, q, r)
        return null_space(_residual_complement(a_alpha, a_u))

    return B.memo(("Z", p, q, r), build)


def zeta_space(B: Bicomplex, p: int, q: int, r: int) -> np.ndarray:
    """Orthonormal basis of admissible zeta in C^{p-1,q} for E_r-exactness at (p,q), r >= 2."""
    c_zeta, c_v, _ = _exact_blocks(B, p, q, r)
    if c_zeta.shape[1] == 0:
        return np.zeros((0, 0), dtype=np.complex128)
    return null_space(_residual_complement(c_zeta, c_v))


def er_exact_space(B: Bicomplex, p: int, q: int, r: int) -> np.ndarray:
    """Orthonormal basis of B_r^{p,q}."""
    _check_r(r)

    def build():
        if B.dim(p, q) == 0:
            return np.zeros((0, 0), dtype=np.complex128)
        gens = [B.delbar_at(p, q - 1)]
        if r >= 2 and B.dim(p - 1, q):
            gens.append(B.del_at(p - 1, q) @ zeta_space(B, p, q, r))
        return orth(np.hstack(gens))

    return B.memo(("B", p, q, r), build)


# ------------------------------------------------------------------ pages


@dataclass(frozen=True, eq=False)
class PageCell:
    dim: int
    basis: np.ndarray  # orthonormal representatives of Z_r cap B_r^perp


@dataclass(frozen=True, eq=False)
class PageTable:
    r: int
    n: int
    cells: Mapping[Bideg, PageCell]
    totals: tuple[int, ...]
    betti: tuple[int, ...]
    degeneration_page: int

    def dim(self, p: int, q: int) -> int:
        cell = self.cells.get((p, q))
        return cell.dim if cell else 0


def page_cell(B: Bicomplex, p: int, q: int, r: int) -> PageCell:
    def build():
        z = er_closed_space(B, p, q, r)
        b = er_exact_space(B, p, q, r)
        if b.shape[1] > z.shape[1]:
            raise NumericalError(f"B_{r} larger than Z_{r} at {(p, q)}")
        if z.shape[1] == 0:
            return PageCell(0, np.zeros((B.dim(p, q), 0), dtype=np.complex128))
        reps = orth(projector(z) - projector(b)) if b.shape[1] else z
        if reps.shape[1] != z.shape[1] - b.shape[1]:
            raise NumericalError(f"quotient representatives at {(p, q)}, r={r} have the wrong size")
        return PageCell(reps.shape[1], reps)

    return B.memo(("cell", p, q, r), build)


def page_totals(B: Bicomplex, r: int) -> tuple[int, ...]:
    g = B.grading
    return tuple(sum(page_cell(B, p, q, r).dim for p, q in g.bidegrees(k)) for k in range(2 * B.n + 1))


def degeneration_page(B: Bicomplex) -> int:
    """Smallest r with sum_{p+q=k} dim E_r^{p,q} = b_k for every k (at most n+1)."""

    def build():
        b = betti(B)
        for r in range(1, B.n + 2):
            if page_totals(B, r) == b:
                return r
        raise NumericalError("pages failed to stabilise by r = n+1")

    return B.memo("degeneration_page", build)


def page(B: Bicomplex, r: int) -> PageTable:
    _check_r(r)
    cells = {bd: page_cell(B, *bd, r) for bd in B.grading.all_bidegrees()}
    return PageTable(r, B.n, cells, page_totals(B, r), betti(B), degeneration_page(B))


def e_infinity_cell(B: Bicomplex, p: int, q: int) -> PageCell:
    return page_cell(B, p, q, degeneration_page(B))


# -------------------------------------------------------------- witnesses


@dataclass(frozen=True, eq=False)
class TowerWitness:
    p: int
    q: int
    alpha: np.ndarray
    us: tuple[np.ndarray, ...]  # u_1 .. u_{r-1}

    @property
    def r(self) -> int:
        return len(self.us) + 1

    def residuals(self, B: Bicomplex) -> list[float]:
        p, q = self.p, self.q
        res = [np.linalg.norm(B.delbar_at(p, q) @ self.alpha)]
        chain = [self.alpha] + list(self.us)
        for l in range(len(self.us)):
            a, b = chain[l], chain[l + 1]
            lhs = B.del_at(p + l, q - l) @ a
            rhs = B.delbar_at(p + l + 1, q - l - 1) @ b
            res.append(np.linalg.norm(lhs - rhs))
        return [float(x) for x in res]

    def forms(self) -> list[Form]:
        return [Form((self.p + self.q), {(self.p + l, self.q - l): v}) for l, v in enumerate([self.alpha, *self.us])]


def tower_witness(B: Bicomplex, p: int, q: int, r: int, alpha: np.ndarray, *, check: bool = True) -> TowerWitness:
    """Minimum-norm (u_1..u_{r-1}) for alpha in Z_r^{p,q}."""
    _check_r(r)
    a_alpha, a_u, unknowns = _closed_blocks(B, p, q, r)
    alpha = np.asarray(alpha, dtype=np.complex128)
    sol = lstsq(a_u, -a_alpha @ alpha) if a_u.shape[1] else np.zeros(0, dtype=np.complex128)
    us, start = [], 0
    for bd in unknowns:
        d = B.dim(*bd)
        us.append(sol[start : start + d])
        start += d
    w = TowerWitness(p, q, alpha, tuple(us))
    if check:
        scale = 1.0 + np.linalg.norm(alpha) + np.linalg.norm(sol)
        worst = max(w.residuals(B))
        if worst > zero_cutoff(B.max_norm()) * scale * 10:
            raise PreconditionError(f"form is not E_{r}-closed at {(p, q)}", worst)
    return w


@dataclass(frozen=True, eq=False)
class ExactnessWitness:
    p: int
    q: int
    r: int
    alpha: np.ndarray
    zeta: np.ndarray  # in C^{p-1,q}; empty for r = 1
    xi: np.ndarray  # in C^{p,q-1}
    vs: tuple[np.ndarray, ...]  # v_{r-3}, ..., v_0

    def residuals(self, B: Bicomplex) -> list[float]:
        p, q = self.p, self.q
        main = B.delbar_at(p, q - 1) @ self.xi - self.alpha
        if self.r >= 2:
            main = main + B.del_at(p - 1, q) @ self.zeta
        res = [np.linalg.norm(main)]
        if self.r >= 2:
            c_zeta, c_v, _ = _exact_blocks(B, p, q, self.r)
            vv = np.concatenate(self.vs) if self.vs else np.zeros(0, dtype=np.complex128)
            res.append(np.linalg.norm(c_zeta @ self.zeta + (c_v @ vv if c_v.shape[1] else 0)))
        return [float(x) for x in res]

    def valid(self, B: Bicomplex) -> bool:
        scale = 1.0 + np.linalg.norm(self.alpha) + np.linalg.norm(self.zeta) + np.linalg.norm(self.xi)
        return max(self.residuals(B)) <= zero_cutoff(B.max_norm()) * scale * 10

    def lift(self, B: Bicomplex, r_new: int) -> "ExactnessWitness":
        """Same (zeta, xi) seen as an E_{r_new}-exactness witness, r_new >= r.

        A zeta admissible for r stays admissible for larger r by padding the
        v-tower with zeros at its far end (the old bottom equation delbar v_0 = 0
        becomes delbar v_0 = del 0).
        """
        if r_new < self.r:
            raise DomainError("can only lift to a later page")
        if self.r == 1:
            zeta = np.zeros(B.dim(self.p - 1, self.q), dtype=np.complex128)
            vs: tuple[np.ndarray, ...] = ()
            start = 1
        else:
            zeta, vs = self.zeta, self.vs
            start = self.r
        # tower for r has r-2 v's; going to r+1 appends one zero v at the bottom
        v_list = list(vs)
        for rr in range(start, r_new):
            if rr >= 2:
                j = rr - 2  # new bottom v index in the r = rr+1 tower ordering
                bd = (self.p - 2 - j, self.q + 1 + j)
                v_list.append(np.zeros(B.dim(*bd), dtype=np.complex128))
        return ExactnessWitness(self.p, self.q, r_new, self.alpha, zeta, self.xi, tuple(v_list))


def exactness_witness(B: Bicomplex, p: int, q: int, r: int, alpha: np.ndarray) -> ExactnessWitness | None:
    """Least-squares witness for alpha in B_r^{p,q}, or None when alpha is not E_r-exact."""
    _check_r(r)
    alpha = np.asarray(alpha, dtype=np.complex128)
    n_xi = B.dim(p, q - 1)
    if r == 1:
        a = B.delbar_at(p, q - 1)
        xi = lstsq(a, alpha) if n_xi else np.zeros(0, dtype=np.complex128)
        w = ExactnessWitness(p, q, 1, alpha, np.zeros(0, dtype=np.complex128), xi, ())
        return w if w.valid(B) else None
    c_zeta, c_v, v_bds = _exact_blocks(B, p, q, r)
    n_zeta, n_v = c_zeta.shape[1], c_v.shape[1]
    top = np.hstack([B.del_at(p - 1, q), np.zeros((B.dim(p, q), n_v)), B.delbar_at(p, q - 1)])
    bottom = np.hstack([c_zeta, c_v, np.zeros((c_zeta.shape[0], n_xi))])
    a = np.vstack([top, bottom])
    rhs = np.concatenate([alpha, np.zeros(c_zeta.shape[0])])
    sol = lstsq(a, rhs)
    zeta = sol[:n_zeta]
    vv = sol[n_zeta : n_zeta + n_v]
    xi = sol[n_zeta + n_v :]
    vs, start = [], 0
    for bd in v_bds:
        d = B.dim(*bd)
        vs.append(vv[start : start + d])
        start += d
    w = ExactnessWitness(p, q, r, alpha, zeta, xi, tuple(vs))
    return w if w.valid(B) else None


# ----------------------------------------------------------- differentials


def dr_map(B: Bicomplex, r: int, p: int, q: int, *, check_witness: bool = True) -> np.ndarray:
    """Matrix of d_r: E_r^{p,q} -> E_r^{p+r,q-r+1} in the page representative bases."""
    _check_r(r)

    def build():
        src = page_cell(B, p, q, r)
        tp, tq = p + r, q - r + 1
        tgt = page_cell(B, tp, tq, r) if B.dim(tp, tq) else PageCell(0, np.zeros((0, 0)))
        if src.dim == 0 or tgt.dim == 0:
            return np.zeros((tgt.dim, src.dim), dtype=np.complex128)
        images = []
        for j in range(src.dim):
            w = tower_witness(B, p, q, r, src.basis[:, j])
            last = w.us[-1] if w.us else w.alpha
            images.append(B.del_at(tp - 1, tq) @ last)
        img = np.column_stack(images)
        mat = adj(tgt.basis) @ img
        if check_witness and r >= 2:
            _check_witness_independence(B, p, q, r, src, tgt, mat)
        return mat

    return B.memo(("dr", r, p, q), build)


def _check_witness_independence(B, p, q, r, src, tgt, mat) -> None:
    # second witness: min-norm solution plus a fixed element of the homogeneous solution space
    _, a_u, _ = _closed_blocks(B, p, q, r)
    kern = null_space(a_u)
    if kern.shape[1] == 0:
        return
    rng = np.random.default_rng(7)
    mix = kern @ (rng.standard_normal(kern.shape[1]) + 1j * rng.standard_normal(kern.shape[1]))
    n_last = B.dim(p + r - 1, q - r + 1)
    shift = mix[len(mix) - n_last :]
    delta = adj(tgt.basis) @ (B.del_at(p + r - 1, q - r + 1) @ shift)
    if np.linalg.norm(delta) > tolerances().subspace * (1 + np.linalg.norm(mat)):
        raise NumericalError(f"d_{r} at {(p, q)} depends on the witness choice ({np.linalg.norm(delta):.2e})")


def dr_page_dims(B: Bicomplex, r: int) -> dict[Bideg, int]:
    """dim E_{r+1}^{p,q} from the homology of d_r: dim ker(out) - rank(in)."""
    out = {}
    for p, q in B.grading.all_bidegrees():
        e = page_cell(B, p, q, r).dim
        d_out = dr_map(B, r, p, q)
        d_in = dr_map(B, r, p - r, q + r - 1) if B.dim(p - r, q + r - 1) else np.zeros((e, 0))
        out[(p, q)] = e - rank(d_out) - rank(d_in)
    return out


# ------------------------------------------------------------------- theta_0


def theta0_map(B: Bicomplex, k: int) -> np.ndarray:
    """Matrix of {alpha}_DR -> {alpha^{0,k}} in E_infinity^{0,k}."""
    if not 0 <= k <= 2 * B.n:
        raise DomainError(f"degree {k} outside 0..{2 * B.n}")
    h = cohomology(B, "derham", k)
    if k > B.n:
        return np.zeros((0, h.dimension), dtype=np.complex128)
    cell = e_infinity_cell(B, 0, k)
    sl = B.grading.offsets(k)[(0, k)]
    return adj(cell.basis) @ h.basis[sl, :]


@dataclass(frozen=True, eq=False)
class TypeOneOneResult:
    is_type_one_one: bool
    e_infinity_norm: float
    certificate: Form | None

    def __bool__(self) -> bool:
        return self.is_type_one_one


def is_type_one_one(M, alpha: Form) -> TypeOneOneResult:
    """Decide whether the real De Rham class of alpha has a (1,1) representative.

    M must be an ExteriorModel (the certificate uses conjugation). alpha must be
    a real, d-closed 2-form.
    """
    from .models import conjugate, d_form, is_real

    B = M.bicomplex
    if alpha.degree != 2:
        raise DomainError("the (1,1) criterion is stated for degree-2 classes")
    if not is_real(M, alpha, tol=1e3 * zero_cutoff(alpha.norm())):
        raise DomainError("class representative is not real")
    if d_form(M, alpha).norm() > 10 * zero_cutoff(B.max_norm()) * (1 + alpha.norm()):
        raise DomainError("representative is not d-closed")
    a02 = alpha.component(0, 2, M.grading)
    cell = e_infinity_cell(B, 0, 2)
    coords = adj(cell.basis) @ a02 if cell.dim else np.zeros(0)
    proj = float(np.linalg.norm(coords))
    if proj > tolerances().subspace * (1 + alpha.norm()):
        return TypeOneOneResult(False, proj, None)
    # alpha^{0,2} = delbar u^{0,1}; u = conj(u^{0,1}) + u^{0,1}; certificate alpha - du
    u01 = lstsq(B.delbar_at(0, 1), a02)
    u_form = Form(1, {(0, 1): u01})
    u_form = u_form + conjugate(M, u_form)
    cert = alpha - d_form(M, u_form)
    off = [bd for bd in cert.bidegrees(tol=10 * zero_cutoff(1 + alpha.norm())) if bd != (1, 1)]
    if off:
        raise NumericalError(f"certificate keeps components at {off}")
    cert = Form(2, {(1, 1): cert.component(1, 1, M.grading)})
    return TypeOneOneResult(True, proj, cert)


def check_page_invariants(B: Bicomplex) -> list[str]:
    """Internal consistency of the page computation; returns human-readable failures."""
    problems = []
    if not validate_bicomplex(B).valid:
        problems.append("bicomplex identities fail")
    b = betti(B)
    prev = None
    for r in range(1, B.n + 2):
        t = page_totals(B, r)
        if any(x < y for x, y in zip(t, b)):
            problems.append(f"page {r} totals {t} drop below Betti numbers {b}")
        if prev is not None and any(x > y for x, y in zip(t, prev)):
            problems.append(f"page totals increase from r={r - 1} to r={r}")
        prev = t
    return problems
