"""Exterior-algebra models of nilmanifolds built from structure equations.

Generators are numbered 0..2n-1: index g < n is phi^{g+1}, index g >= n is
phibar^{g-n+1}. A monomial is a strictly increasing tuple of generator
indices, so holomorphic factors come first. Every sign in this module is the
parity of the permutation that sorts a concatenation of such tuples.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from itertools import combinations
from math import comb
from typing import Mapping, Sequence, Union

import numpy as np

from .bicomplex import Bicomplex, Bideg, Bigrading, Form, validate_bicomplex
from .errors import DomainError, IntegrabilityError, StructureError
from .numerics import cplx, zero_cutoff

Monomial = tuple[int, ...]
Pair = tuple[int, int]
# polynomial in t, tbar: {(a, b): c} means sum of c * t^a * tbar^b
Poly = Mapping[tuple[int, int], complex]


def generator_name(g: int, n: int) -> str:
    return f"phi^{g + 1}" if g < n else f"phibar^{g - n + 1}"


def sort_sign(seq: Sequence[int]) -> tuple[int, Monomial | None]:
    """Sign of the permutation sorting seq, and the sorted tuple; (0, None) on repeats."""
    if len(set(seq)) != len(seq):
        return 0, None
    inv = sum(1 for i in range(len(seq)) for j in range(i + 1, len(seq)) if seq[i] > seq[j])
    return (-1 if inv % 2 else 1), tuple(sorted(seq))


def bidegree_of(m: Monomial, n: int) -> Bideg:
    p = sum(1 for g in m if g < n)
    return p, len(m) - p


def conj_generator(g: int, n: int) -> int:
    return g + n if g < n else g - n


# ------------------------------------------------------------------- specs


@dataclass(frozen=True)
class StructureSpec:
    """d(phi^i) for i = 1..n as {sorted generator pair: coefficient}."""

    n: int
    equations: tuple[Mapping[Pair, complex], ...]
    name: str = ""

    def __post_init__(self) -> None:
        if self.n < 1:
            raise StructureError("n must be >= 1")
        if len(self.equations) != self.n:
            raise StructureError(f"expected {self.n} equations, got {len(self.equations)}")
        for i, eq in enumerate(self.equations):
            for pair in eq:
                if len(pair) != 2 or not all(0 <= g < 2 * self.n for g in pair):
                    raise StructureError(f"d phi^{i + 1}: monomial {pair} references an index beyond n = {self.n}")

    def canonical(self) -> list[list[tuple[int, int, float, float]]]:
        """Sorted, sign-normalised, zero-free rendering used for hashing and comparison."""
        out = []
        for eq in self.equations:
            acc: dict[Pair, complex] = {}
            for pair, c in eq.items():
                s, m = sort_sign(pair)
                if s:
                    acc[m] = acc.get(m, 0) + s * complex(c)
            out.append([(a, b, c.real, c.imag) for (a, b), c in sorted(acc.items()) if c != 0])
        return out

    def digest(self) -> str:
        payload = json.dumps({"n": self.n, "eq": self.canonical()}, sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class FamilySpec:
    """One-parameter family: coefficients of d(psi_t^i) are polynomials in t, tbar.

    `coframe`, when present, expresses psi_t^i in the t = 0 coframe as
    {(i, g): Poly} (g a generator index of the t = 0 model). It lets fixed
    forms be re-expressed in the t-coframe and split into J_t-types.
    """

    name: str
    n: int
    equations: tuple[Mapping[Pair, Poly], ...]
    radius: float
    parameter: str = "t"
    coframe: Mapping[tuple[int, int], Poly] | None = None

    def __post_init__(self) -> None:
        if len(self.equations) != self.n:
            raise StructureError(f"expected {self.n} equations, got {len(self.equations)}")
        if not self.radius > 0:
            raise StructureError("validity radius must be positive")

    def digest(self) -> str:
        def poly(pl):
            return sorted((a, b, complex(c).real, complex(c).imag) for (a, b), c in pl.items())

        eqs = [sorted((list(pair), poly(pl)) for pair, pl in eq.items()) for eq in self.equations]
        frame = None if self.coframe is None else sorted((list(k), poly(v)) for k, v in self.coframe.items())
        payload = json.dumps({"n": self.n, "eq": eqs, "r": self.radius, "frame": frame}, sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


def eval_poly(poly: Poly, t: complex) -> complex:
    t = complex(t)
    return complex(sum(complex(c) * t**a * t.conjugate() ** b for (a, b), c in poly.items()))


def family_at(fam: FamilySpec, t: complex) -> StructureSpec:
    t = complex(t)
    if abs(t) > fam.radius * (1 + 1e-12):
        raise DomainError(f"t = {t} lies outside the validity disc |t| <= {fam.radius}")
    eqs = tuple({pair: eval_poly(poly, t) for pair, poly in eq.items()} for eq in fam.equations)
    return StructureSpec(fam.n, eqs, name=f"{fam.name}@t={t.real:+.6g}{t.imag:+.6g}i")


def coframe_matrix(fam: FamilySpec, t: complex) -> np.ndarray:
    """2n x 2n matrix M with (psi, psibar) = M (phi, phibar) as covectors."""
    n = fam.n
    m = np.zeros((2 * n, 2 * n), dtype=np.complex128)
    if fam.coframe is None:
        return np.eye(2 * n, dtype=np.complex128)
    for (i, g), poly in fam.coframe.items():
        m[i, g] = eval_poly(poly, t)
    # psibar^i = conj(psi^i): conjugate coefficients and swap phi <-> phibar
    for i in range(n):
        for g in range(2 * n):
            m[i + n, conj_generator(g, n)] = m[i, g].conjugate()
    return m


# ------------------------------------------------------------------- model


@dataclass(frozen=True, eq=False)
class ExteriorModel:
    spec: StructureSpec
    bicomplex: Bicomplex
    basis: Mapping[Bideg, tuple[Monomial, ...]]
    index: Mapping[Monomial, tuple[Bideg, int]]
    conjugation: Mapping[Bideg, np.ndarray]  # real signed permutation (p,q) -> (q,p), applied to conj(u)
    volume: complex = 1.0
    _memo: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n(self) -> int:
        return self.spec.n

    @property
    def grading(self) -> Bigrading:
        return self.bicomplex.grading

    def monomial_form(self, *generators: int, coeff: complex = 1.0) -> Form:
        s, m = sort_sign(generators)
        if not s:
            raise DomainError("repeated generator in monomial")
        bd, j = self.index[m]
        v = np.zeros(self.grading.dim(*bd), dtype=np.complex128)
        v[j] = s * coeff
        return Form(len(m), {bd: v})

    def top_monomial(self) -> Monomial:
        return tuple(range(2 * self.n))

    def unit(self) -> Form:
        return Form(0, {(0, 0): np.ones(1, dtype=np.complex128)})


def monomial_basis(n: int) -> dict[Bideg, tuple[Monomial, ...]]:
    return {
        (p, q): tuple(i + tuple(n + j for j in jj) for i in combinations(range(n), p) for jj in combinations(range(n), q))
        for p in range(n + 1)
        for q in range(n + 1)
    }


def _generator_differentials(spec: StructureSpec) -> list[dict[Monomial, complex]]:
    n = spec.n
    dgen: list[dict[Monomial, complex]] = [dict() for _ in range(2 * n)]
    for i, eq in enumerate(spec.equations):
        for pair, c in eq.items():
            s, m = sort_sign(pair)
            if s and complex(c) != 0:
                dgen[i][m] = dgen[i].get(m, 0) + s * complex(c)
    for i in range(n):
        for m, c in dgen[i].items():
            s, mc = sort_sign([conj_generator(g, n) for g in m])
            dgen[i + n][mc] = dgen[i + n].get(mc, 0) + s * c.conjugate()
    return dgen


def _d_monomial(m: Monomial, dgen: list[dict[Monomial, complex]]) -> dict[Monomial, complex]:
    """Leibniz rule: d(g_1 ^ ... ^ g_k) = sum_j (-1)^j g_1 ^ .. dg_j .. ^ g_k."""
    out: dict[Monomial, complex] = {}
    for j, g in enumerate(m):
        for pair, c in dgen[g].items():
            s, res = sort_sign(m[:j] + pair + m[j + 1 :])
            if s:
                out[res] = out.get(res, 0) + ((-1) ** j) * s * c
    return out


def build_model(spec: StructureSpec) -> ExteriorModel:
    """Extend d from the generators to the whole exterior algebra and split it into del + delbar."""
    n = spec.n
    dgen = _generator_differentials(spec)
    scale = max((abs(c) for eq in dgen for c in eq.values()), default=0.0)
    tol = zero_cutoff(scale * scale)
    for i in range(n):
        bad = [m for m, c in dgen[i].items() if abs(c) > 0 and bidegree_of(m, n) == (0, 2)]
        if bad:
            raise IntegrabilityError(
                f"d {generator_name(i, n)} has a (0,2) component; the almost complex structure is not integrable"
            )
    for g in range(2 * n):
        dd: dict[Monomial, complex] = {}
        for m, c in dgen[g].items():
            for mm, cc in _d_monomial(m, dgen).items():
                dd[mm] = dd.get(mm, 0) + c * cc
        worst = max((abs(v) for v in dd.values()), default=0.0)
        if worst > tol:
            raise IntegrabilityError(f"d^2 {generator_name(g, n)} != 0 (max coefficient {worst:.3g})")

    basis = monomial_basis(n)
    index = {m: (bd, j) for bd, ms in basis.items() for j, m in enumerate(ms)}
    dims = {bd: len(ms) for bd, ms in basis.items()}
    partial, partialbar = {}, {}
    for (p, q), ms in basis.items():
        dl = np.zeros((dims.get((p + 1, q), 0), len(ms)), dtype=np.complex128)
        db = np.zeros((dims.get((p, q + 1), 0), len(ms)), dtype=np.complex128)
        for col, m in enumerate(ms):
            for res, c in _d_monomial(m, dgen).items():
                bd, row = index[res]
                if bd == (p + 1, q):
                    dl[row, col] += c
                elif bd == (p, q + 1):
                    db[row, col] += c
                elif abs(c) > tol:
                    raise IntegrabilityError(f"d of monomial {m} has a component of bidegree {bd}")
        partial[(p, q)] = dl
        partialbar[(p, q)] = db

    conjugation = {}
    for (p, q), ms in basis.items():
        c = np.zeros((dims[(q, p)], len(ms)))
        for col, m in enumerate(ms):
            s, mc = sort_sign([conj_generator(g, n) for g in m])
            c[index[mc][1], col] = s
        conjugation[(p, q)] = c

    B = Bicomplex(Bigrading(n, dims), partial, partialbar)
    report = validate_bicomplex(B)
    if not report.valid:
        v = report.violations[0]
        raise IntegrabilityError(f"{v.identity} fails at bidegree {v.bidegree} (residual {v.residual:.3g})")
    return ExteriorModel(spec, B, basis, index, conjugation)


# ------------------------------------------------------------- operations


def _wedge_table(M: ExteriorModel, a: Bideg, b: Bideg):
    def build():
        ia, ib, io, sg = [], [], [], []
        out_bd = (a[0] + b[0], a[1] + b[1])
        for i, ma in enumerate(M.basis[a]):
            for j, mb in enumerate(M.basis[b]):
                s, m = sort_sign(ma + mb)
                if s:
                    ia.append(i)
                    ib.append(j)
                    io.append(M.index[m][1])
                    sg.append(s)
        return out_bd, np.array(ia, int), np.array(ib, int), np.array(io, int), np.array(sg, float)

    key = ("wedge", a, b)
    if key not in M._memo:
        M._memo[key] = build()
    return M._memo[key]


def wedge(M: ExteriorModel, u: Form, v: Form) -> Form:
    """Exterior product in the monomial basis."""
    k = u.degree + v.degree
    if k > 2 * M.n:
        raise DomainError(f"degree {u.degree} + {v.degree} exceeds 2n = {2 * M.n}")
    g = M.grading
    comps = {bd: np.zeros(g.dim(*bd), dtype=np.complex128) for bd in g.bidegrees(k)}
    for a, ua in u.components.items():
        for b, vb in v.components.items():
            if not (ua.size and vb.size):
                continue
            out_bd, ia, ib, io, sg = _wedge_table(M, a, b)
            if out_bd not in comps or not ia.size:
                continue
            np.add.at(comps[out_bd], io, sg * ua[ia] * vb[ib])
    return Form(k, comps)


def conjugate(M: ExteriorModel, u: Form) -> Form:
    """Complex conjugation: anti-linear, (p,q) -> (q,p)."""
    return Form(u.degree, {(q, p): M.conjugation[(p, q)] @ v.conj() for (p, q), v in u.components.items()})


def conj_operator(M: ExteriorModel, op_at, shift: int):
    """Conjugate family of operators: op_at(p, q) maps (p,q) -> (p+shift, q-shift).

    Returns a callable giving conj o op o conj at (a, b), which maps
    (a, b) -> (a-shift, b+shift).
    """

    def at(a: int, b: int) -> np.ndarray:
        g = M.grading
        src = g.dim(a, b)
        tgt = g.dim(a - shift, b + shift)
        if src == 0 or tgt == 0:
            return np.zeros((tgt, src), dtype=np.complex128)
        inner = op_at(b, a)
        return M.conjugation[(b + shift, a - shift)] @ inner.conj() @ M.conjugation[(a, b)]

    return at


def d_form(M: ExteriorModel, u: Form, h: complex = 1.0) -> Form:
    """d_h u = h*del u + delbar u."""
    B, g = M.bicomplex, M.grading
    k = u.degree + 1
    if k > 2 * M.n:
        raise DomainError("cannot differentiate a top-degree form into degree 2n+1")
    comps = {bd: np.zeros(g.dim(*bd), dtype=np.complex128) for bd in g.bidegrees(k)}
    for (p, q), v in u.components.items():
        if (p + 1, q) in comps:
            comps[(p + 1, q)] += complex(h) * (B.del_at(p, q) @ v)
        if (p, q + 1) in comps:
            comps[(p, q + 1)] += B.delbar_at(p, q) @ v
    return Form(k, comps)


def integrate(M: ExteriorModel, u: Form) -> complex:
    if u.degree != 2 * M.n:
        raise DomainError(f"can only integrate forms of degree {2 * M.n}, got {u.degree}")
    top = u.component(M.n, M.n, M.grading)
    return complex(top[0] * M.volume)


def is_real(M: ExteriorModel, u: Form, tol: float | None = None) -> bool:
    diff = (u - conjugate(M, u)).norm()
    return diff <= (tol if tol is not None else zero_cutoff(u.norm()))


def random_form(M: ExteriorModel, rng: np.random.Generator, k: int, bidegree: Bideg | None = None) -> Form:
    g = M.grading
    keys = [bidegree] if bidegree is not None else g.bidegrees(k)
    comps = {bd: rng.standard_normal(g.dim(*bd)) + 1j * rng.standard_normal(g.dim(*bd)) for bd in keys}
    return Form(k if bidegree is None else sum(bidegree), comps)


def exterior_power_matrix(M_coframe: np.ndarray, basis_k: Sequence[Monomial]) -> np.ndarray:
    """W[I, J] = det(A[I, J]): phi^I = sum_J W[I, J] psi^J when phi = A psi."""
    size = len(basis_k)
    w = np.empty((size, size), dtype=np.complex128)
    for a, mi in enumerate(basis_k):
        rows = M_coframe[list(mi)]
        for b, mj in enumerate(basis_k):
            w[a, b] = np.linalg.det(rows[:, list(mj)]) if mi else 1.0
    return w


def coframe_transform(fam: FamilySpec, t: complex, k: int) -> tuple[list[Monomial], np.ndarray]:
    """Matrix T with y = T x, taking t = 0 monomial coefficients x to t-coframe coefficients y in degree k.

    Monomials of degree k are listed by increasing (p, q) then basis order.
    """
    n = fam.n
    basis = monomial_basis(n)
    mons = [m for p in range(n + 1) for q in range(n + 1) if p + q == k for m in basis[(p, q)]]
    minv = np.linalg.inv(coframe_matrix(fam, t))  # phi = Minv psi
    w = exterior_power_matrix(minv, mons)
    return mons, w.T


# ---------------------------------------------------------------- catalog


def _eq(n: int, *terms: tuple[complex, str]) -> dict[Pair, complex]:
    """Terms written in the file notation, e.g. (-1, "12") or (1, "11'")."""
    out: dict[Pair, complex] = {}
    for c, word in terms:
        gens = _parse_word(word, n)
        out[gens] = out.get(gens, 0) + c
    return out


def _parse_word(word: str, n: int) -> Pair:
    gens: list[int] = []
    i = 0
    while i < len(word):
        g = int(word[i]) - 1
        i += 1
        if i < len(word) and word[i] == "'":
            g += n
            i += 1
        gens.append(g)
    return tuple(gens)  # type: ignore[return-value]


def torus(n: int) -> StructureSpec:
    return StructureSpec(n, tuple({} for _ in range(n)), name=f"torus_{n}")


def _iwasawa() -> StructureSpec:
    return StructureSpec(3, ({}, {}, _eq(3, (-1, "12"))), name="iwasawa")


def _primary_kodaira() -> StructureSpec:
    return StructureSpec(2, ({}, _eq(2, (1, "11'"))), name="primary_kodaira")


def _kodaira_torus() -> StructureSpec:
    # primary Kodaira surface times an elliptic curve: E_1-degenerate, not sG
    return StructureSpec(3, ({}, {}, _eq(3, (1, "11'"))), name="kodaira_torus")


def _e3_nilmanifold() -> StructureSpec:
    # simplest hit of scripts/search_e3.py; E_2 != E_3 = E_infinity
    return StructureSpec(3, ({}, _eq(3, (1, "11'")), _eq(3, (1, "21'"))), name="nilmanifold_e3")


def _iwasawa_family() -> FamilySpec:
    # psi^1 = phi^1 + t phibar^1, psi^2 = phi^2, psi^3 = (1 - |t|^2) phi^3
    eqs = ({}, {}, {(0, 1): {(0, 0): -1.0}, (1, 3): {(1, 0): -1.0}})
    coframe = {
        (0, 0): {(0, 0): 1.0},
        (0, 3): {(1, 0): 1.0},
        (1, 1): {(0, 0): 1.0},
        (2, 2): {(0, 0): 1.0, (1, 1): -1.0},
    }
    return FamilySpec("iwasawa_family", 3, eqs, radius=0.5, coframe=coframe)


def _kodaira_family() -> FamilySpec:
    # psi^1 = phi^1 + t phibar^1, psi^2 = (1 - |t|^2) phi^2: J_t moves, equations stay fixed
    eqs = ({}, {(0, 2): {(0, 0): 1.0}})
    coframe = {
        (0, 0): {(0, 0): 1.0},
        (0, 2): {(1, 0): 1.0},
        (1, 1): {(0, 0): 1.0, (1, 1): -1.0},
    }
    return FamilySpec("kodaira_family", 2, eqs, radius=0.5, coframe=coframe)


def _iwasawa_constant() -> FamilySpec:
    eqs = ({}, {}, {(0, 1): {(0, 0): -1.0}})
    return FamilySpec("iwasawa_constant", 3, eqs, radius=1.0)


_NAMED = {
    "iwasawa": _iwasawa,
    "primary_kodaira": _primary_kodaira,
    "kodaira_torus": _kodaira_torus,
    "nilmanifold_e3": _e3_nilmanifold,
    "iwasawa_family": _iwasawa_family,
    "kodaira_family": _kodaira_family,
    "iwasawa_constant": _iwasawa_constant,
}

MODEL_NAMES = ("torus_1", "torus_2", "torus_3", "iwasawa", "primary_kodaira", "kodaira_torus", "nilmanifold_e3")
FAMILY_NAMES = ("iwasawa_family", "kodaira_family", "iwasawa_constant")


def catalog(name: str) -> Union[StructureSpec, FamilySpec]:
    if name.startswith("torus_"):
        try:
            n = int(name[len("torus_") :])
        except ValueError:
            n = 0
        if n >= 1:
            return torus(n)
    if name in _NAMED:
        return _NAMED[name]()
    raise LookupError(f"unknown catalog entry {name!r}; available: torus_<n>, " + ", ".join(sorted(_NAMED)))


def catalog_model(name: str) -> ExteriorModel:
    spec = catalog(name)
    if isinstance(spec, FamilySpec):
        spec = family_at(spec, 0)
    key = (spec.n, json.dumps(spec.canonical()))
    if key not in _MODEL_CACHE:
        _MODEL_CACHE[key] = build_model(spec)
    return _MODEL_CACHE[key]


_MODEL_CACHE: dict = {}


def expected_dims(n: int) -> dict[Bideg, int]:
    return {(p, q): comb(n, p) * comb(n, q) for p in range(n + 1) for q in range(n + 1)}


def random_vector(rng: np.random.Generator, size: int) -> np.ndarray:
    return cplx(rng.standard_normal(size) + 1j * rng.standard_normal(size))
