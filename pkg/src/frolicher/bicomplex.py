"""Finite bigraded complexes with anticommuting differentials.

A bicomplex stores one matrix of del (bidegree (1,0)) and one of delbar
(bidegree (0,1)) per bidegree. Everything else, d_h = h*del + delbar and the
rescaling theta_h, is assembled on total degree by stacking the (p, k-p)
blocks in increasing p.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Literal, Mapping

import numpy as np

from .errors import DomainError, NumericalError, StructureError
from .numerics import adj, cplx, null_space, opnorm, rank, tolerances, zero_cutoff

Bideg = tuple[int, int]


@dataclass(frozen=True, eq=False)
class Bigrading:
    n: int
    dims: Mapping[Bideg, int]

    def __post_init__(self) -> None:
        if self.n < 1:
            raise StructureError("complex dimension n must be >= 1")
        for (p, q), d in self.dims.items():
            if d < 0:
                raise StructureError(f"negative dimension at bidegree {(p, q)}")
            if d and not (0 <= p <= self.n and 0 <= q <= self.n):
                raise StructureError(f"nonzero dimension outside the square at bidegree {(p, q)}")

    def dim(self, p: int, q: int) -> int:
        if not (0 <= p <= self.n and 0 <= q <= self.n):
            return 0
        return int(self.dims.get((p, q), 0))

    def bidegrees(self, k: int) -> list[Bideg]:
        """Bidegrees (p, k-p) of total degree k in the square, increasing p."""
        return [(p, k - p) for p in range(max(0, k - self.n), min(k, self.n) + 1)]

    def all_bidegrees(self) -> list[Bideg]:
        return [(p, q) for p in range(self.n + 1) for q in range(self.n + 1)]

    def total_dim(self, k: int) -> int:
        return sum(self.dim(p, q) for p, q in self.bidegrees(k))

    def offsets(self, k: int) -> dict[Bideg, slice]:
        out, start = {}, 0
        for p, q in self.bidegrees(k):
            d = self.dim(p, q)
            out[(p, q)] = slice(start, start + d)
            start += d
        return out


@dataclass(frozen=True, eq=False)
class Bicomplex:
    grading: Bigrading
    partial: Mapping[Bideg, np.ndarray]
    partialbar: Mapping[Bideg, np.ndarray]
    _memo: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n(self) -> int:
        return self.grading.n

    def dim(self, p: int, q: int) -> int:
        return self.grading.dim(p, q)

    def del_at(self, p: int, q: int) -> np.ndarray:
        """del: C^{p,q} -> C^{p+1,q}; zero matrix of the right shape when absent."""
        m = self.partial.get((p, q))
        if m is None:
            return np.zeros((self.dim(p + 1, q), self.dim(p, q)), dtype=np.complex128)
        return m

    def delbar_at(self, p: int, q: int) -> np.ndarray:
        """delbar: C^{p,q} -> C^{p,q+1}; zero matrix of the right shape when absent."""
        m = self.partialbar.get((p, q))
        if m is None:
            return np.zeros((self.dim(p, q + 1), self.dim(p, q)), dtype=np.complex128)
        return m

    def memo(self, key, build: Callable):
        # Results depend only on the immutable matrices and the active tolerances.
        key = (key, tolerances())
        if key not in self._memo:
            self._memo[key] = build()
        return self._memo[key]

    def max_norm(self) -> float:
        def build():
            norms = [opnorm(m) for m in self.partial.values()] + [opnorm(m) for m in self.partialbar.values()]
            return max(norms, default=0.0)

        return self.memo("max_norm", build)


def make_bicomplex(n: int, dims: Mapping[Bideg, int], partial: Mapping, partialbar: Mapping) -> Bicomplex:
    return Bicomplex(
        Bigrading(n, dict(dims)),
        {k: cplx(v) for k, v in partial.items()},
        {k: cplx(v) for k, v in partialbar.items()},
    )


@dataclass(frozen=True, eq=False)
class Form:
    degree: int
    components: Mapping[Bideg, np.ndarray]

    def __post_init__(self) -> None:
        for (p, q) in self.components:
            if p + q != self.degree:
                raise StructureError(f"component {(p, q)} does not have total degree {self.degree}")

    def component(self, p: int, q: int, grading: Bigrading | None = None) -> np.ndarray:
        c = self.components.get((p, q))
        if c is not None:
            return c
        if grading is None:
            raise KeyError((p, q))
        return np.zeros(grading.dim(p, q), dtype=np.complex128)

    def _combine(self, other: "Form", sign: float) -> "Form":
        if other.degree != self.degree:
            raise DomainError("cannot add forms of different degrees")
        comps = {k: v.copy() for k, v in self.components.items()}
        for k, v in other.components.items():
            comps[k] = comps[k] + sign * v if k in comps else sign * v
        return Form(self.degree, comps)

    def __add__(self, other: "Form") -> "Form":
        return self._combine(other, 1.0)

    def __sub__(self, other: "Form") -> "Form":
        return self._combine(other, -1.0)

    def __mul__(self, c: complex) -> "Form":
        return Form(self.degree, {k: c * v for k, v in self.components.items()})

    __rmul__ = __mul__

    def __neg__(self) -> "Form":
        return self * -1.0

    def norm(self) -> float:
        return float(np.sqrt(sum(np.vdot(v, v).real for v in self.components.values())))

    def bidegrees(self, tol: float = 0.0) -> list[Bideg]:
        return sorted(k for k, v in self.components.items() if v.size and np.abs(v).max() > tol)

    def to_vector(self, grading: Bigrading) -> np.ndarray:
        k = self.degree
        out = np.zeros(grading.total_dim(k), dtype=np.complex128)
        offs = grading.offsets(k)
        for key, v in self.components.items():
            if key not in offs:
                if np.abs(v).max(initial=0.0) > 0:
                    raise StructureError(f"component {key} outside the grading")
                continue
            if v.shape != (offs[key].stop - offs[key].start,):
                raise StructureError(f"component {key} has length {v.shape} but dims say {grading.dim(*key)}")
            out[offs[key]] = v
        return out

    @classmethod
    def from_vector(cls, grading: Bigrading, k: int, vec: np.ndarray) -> "Form":
        vec = cplx(vec)
        if vec.shape != (grading.total_dim(k),):
            raise StructureError(f"vector of length {vec.shape} does not match total degree {k}")
        return cls(k, {key: vec[s].copy() for key, s in grading.offsets(k).items()})

    @classmethod
    def pure(cls, grading: Bigrading, p: int, q: int, vec) -> "Form":
        vec = cplx(vec)
        if vec.shape != (grading.dim(p, q),):
            raise StructureError(f"component {(p, q)} needs length {grading.dim(p, q)}")
        return cls(p + q, {(p, q): vec})

    @classmethod
    def zero(cls, grading: Bigrading, k: int) -> "Form":
        return cls.from_vector(grading, k, np.zeros(grading.total_dim(k)))


# ---------------------------------------------------------------- validation


@dataclass(frozen=True)
class Violation:
    identity: str
    bidegree: Bideg
    residual: float


@dataclass(frozen=True)
class ValidationReport:
    valid: bool
    violations: tuple[Violation, ...]
    max_residual: float
    threshold: float


def _check_shapes(B: Bicomplex) -> None:
    g = B.grading
    for (p, q), m in B.partial.items():
        if m.shape != (g.dim(p + 1, q), g.dim(p, q)):
            raise StructureError(
                f"del at bidegree {(p, q)} has shape {m.shape}, expected {(g.dim(p + 1, q), g.dim(p, q))}"
            )
    for (p, q), m in B.partialbar.items():
        if m.shape != (g.dim(p, q + 1), g.dim(p, q)):
            raise StructureError(
                f"delbar at bidegree {(p, q)} has shape {m.shape}, expected {(g.dim(p, q + 1), g.dim(p, q))}"
            )


def _maxabs(a: np.ndarray) -> float:
    return float(np.abs(a).max()) if a.size else 0.0


def validate_bicomplex(B: Bicomplex) -> ValidationReport:
    """Check del^2 = 0, delbar^2 = 0 and del delbar + delbar del = 0 bidegree by bidegree."""
    _check_shapes(B)
    thr = zero_cutoff(B.max_norm())
    found, worst = [], 0.0
    for p, q in B.grading.all_bidegrees():
        checks = {
            "del o del": B.del_at(p + 1, q) @ B.del_at(p, q),
            "delbar o delbar": B.delbar_at(p, q + 1) @ B.delbar_at(p, q),
            "del o delbar + delbar o del": B.del_at(p, q + 1) @ B.delbar_at(p, q)
            + B.delbar_at(p + 1, q) @ B.del_at(p, q),
        }
        for name, m in checks.items():
            res = _maxabs(m)
            worst = max(worst, res)
            if res > thr:
                found.append(Violation(name, (p, q), res))
    return ValidationReport(not found, tuple(found), worst, thr)


# ------------------------------------------------------------- total degree


def _check_degree(B: Bicomplex, k: int) -> None:
    if not 0 <= k <= 2 * B.n:
        raise DomainError(f"degree {k} outside 0..{2 * B.n}")


def _total(B: Bicomplex, k: int, which: str) -> np.ndarray:
    g = B.grading
    src, tgt = g.offsets(k), g.offsets(k + 1)
    out = np.zeros((g.total_dim(k + 1), g.total_dim(k)), dtype=np.complex128)
    for (p, q), s in src.items():
        if which == "del":
            key = (p + 1, q)
            m = B.del_at(p, q)
        else:
            key = (p, q + 1)
            m = B.delbar_at(p, q)
        if key in tgt and m.size:
            out[tgt[key], s] = m
    return out


def del_total(B: Bicomplex, k: int) -> np.ndarray:
    _check_degree(B, k)
    return B.memo(("del_total", k), lambda: _total(B, k, "del"))


def delbar_total(B: Bicomplex, k: int) -> np.ndarray:
    _check_degree(B, k)
    return B.memo(("delbar_total", k), lambda: _total(B, k, "delbar"))


def d_h_total(B: Bicomplex, h: complex, k: int) -> np.ndarray:
    """Matrix of d_h = h*del + delbar from total degree k to k+1."""
    _check_degree(B, k)
    return complex(h) * del_total(B, k) + delbar_total(B, k)


def theta_h(u: Form, h: complex) -> Form:
    """Scale the (p,q)-component by h^p. At h = 0 this keeps only the (0,k) part."""
    h = complex(h)
    # Python gives 0**0 == 1, which is what the h = 0 projection needs.
    return Form(u.degree, {(p, q): (h**p) * v for (p, q), v in u.components.items()})


def theta_h_matrix(grading: Bigrading, h: complex, k: int) -> np.ndarray:
    diag = np.concatenate(
        [np.full(grading.dim(p, q), complex(h) ** p) for p, q in grading.bidegrees(k)] or [np.zeros(0)]
    )
    return np.diag(diag.astype(np.complex128))


# -------------------------------------------------------------- cohomology

Kind = Literal["derham", "dh", "delbar"]


@dataclass(frozen=True, eq=False)
class CohomologySpace:
    degree: int
    dimension: int
    basis: np.ndarray  # columns: orthonormal harmonic representatives, total-degree coordinates
    kind: str
    h: complex
    grading: Bigrading

    def forms(self) -> list[Form]:
        return [Form.from_vector(self.grading, self.degree, self.basis[:, j]) for j in range(self.dimension)]


def _resolve_h(kind: str, h: complex | None) -> complex:
    if kind == "derham":
        return 1.0 + 0j
    if kind == "delbar":
        return 0j
    if kind == "dh":
        if h is None:
            raise DomainError("kind 'dh' needs a value of h")
        return complex(h)
    raise DomainError(f"unknown cohomology kind {kind!r}")


def _dh_or_empty(B: Bicomplex, h: complex, k: int) -> np.ndarray:
    g = B.grading
    if k < 0:
        return np.zeros((g.total_dim(0), 0), dtype=np.complex128)
    if k >= 2 * B.n:
        return np.zeros((0, g.total_dim(k)), dtype=np.complex128)
    return d_h_total(B, h, k)


def cohomology_dim(B: Bicomplex, k: int, h: complex) -> int:
    """Rank-nullity: dim ker d_h(k) - rank d_h(k-1)."""
    _check_degree(B, k)
    h = complex(h)

    def build():
        out_map = _dh_or_empty(B, h, k)
        in_map = _dh_or_empty(B, h, k - 1)
        return B.grading.total_dim(k) - rank(out_map) - rank(in_map)

    return B.memo(("hdim", k, h), build)


def cohomology(B: Bicomplex, kind: Kind, k: int, h: complex | None = None) -> CohomologySpace:
    """d_h-cohomology in degree k with harmonic representatives.

    kind "derham" is h = 1, "delbar" is h = 0 (total delbar-cohomology), "dh" takes h.
    """
    _check_degree(B, k)
    hv = _resolve_h(kind, h)

    def build():
        out_map = _dh_or_empty(B, hv, k)
        in_map = _dh_or_empty(B, hv, k - 1)
        dim = B.grading.total_dim(k) - rank(out_map) - rank(in_map)
        # harmonic space = ker d_h(k) intersected with ker d_h(k-1)^*
        basis = null_space(np.vstack([out_map, adj(in_map)]))
        if basis.shape[1] != dim:
            raise NumericalError(
                f"harmonic basis size {basis.shape[1]} disagrees with rank-nullity {dim} in degree {k}"
            )
        return CohomologySpace(k, dim, basis, kind, hv, B.grading)

    return B.memo(("cohomology", k, hv), build)


def betti(B: Bicomplex) -> tuple[int, ...]:
    return tuple(cohomology_dim(B, k, 1.0) for k in range(2 * B.n + 1))


def theta_h_cohomology_map(B: Bicomplex, h: complex, k: int) -> np.ndarray:
    """Matrix of [alpha] -> [theta_h alpha] from H^k_DR to H^k_{d_h}, harmonic bases on both sides.

    Harmonic representatives span the orthogonal complement of the image inside
    the kernel, so the class coordinates of a closed form x are F^H x.
    """
    h = complex(h)
    if h == 0:
        raise DomainError("theta_h is an isomorphism on cohomology only for h != 0; use the spectral module for h = 0")
    src = cohomology(B, "derham", k)
    tgt = cohomology(B, "dh", k, h)
    return adj(tgt.basis) @ theta_h_matrix(B.grading, h, k) @ src.basis

