"""Tolerances and the dense linear-algebra helpers every module relies on.

Subspaces are passed around as matrices with orthonormal columns. Bases are
canonicalised (greedy pivoted Gram-Schmidt on the orthogonal projector) so the
basis returned for a subspace depends only on the subspace, not on the SVD
routine's choice of phases. That keeps reports byte-stable.
"""

from __future__ import annotations

import contextlib
import contextvars
from dataclasses import dataclass, replace
from typing import Iterator

import numpy as np


@dataclass(frozen=True)
class Tolerances:
    rank: float = 1e-9  # relative singular-value cutoff
    zero: float = 1e-10  # residual cutoff, scaled by 1 + operator norm
    subspace: float = 1e-8  # projector Frobenius distance
    kernel: float = 1e-9  # eigenvalue cutoff, scaled by 1 + lambda_max

    def __post_init__(self) -> None:
        for name in ("rank", "zero", "subspace", "kernel"):
            if not getattr(self, name) > 0:
                raise ValueError(f"tolerance {name} must be positive")


_CURRENT: contextvars.ContextVar[Tolerances] = contextvars.ContextVar(
    "frolicher_tolerances", default=Tolerances()
)


def tolerances() -> Tolerances:
    return _CURRENT.get()


@contextlib.contextmanager
def using_tolerances(**overrides: float) -> Iterator[Tolerances]:
    """Temporarily override tolerances for the current context."""
    token = _CURRENT.set(replace(_CURRENT.get(), **overrides))
    try:
        yield _CURRENT.get()
    finally:
        _CURRENT.reset(token)


def cplx(a) -> np.ndarray:
    return np.asarray(a, dtype=np.complex128)


def adj(a: np.ndarray) -> np.ndarray:
    return a.conj().T


def opnorm(a: np.ndarray) -> float:
    if a.size == 0:
        return 0.0
    return float(np.linalg.norm(a, 2))


def zero_cutoff(scale: float = 0.0) -> float:
    return tolerances().zero * (1.0 + scale)


def _rank_threshold(s: np.ndarray, scale: float | None) -> float:
    # Relative cutoff, but never relative to a matrix that is itself rounding
    # noise: the reference is at least the natural scale of the inputs (1).
    ref = max(float(s[0]) if s.size else 0.0, 1.0 if scale is None else scale)
    return tolerances().rank * ref


def rank(a: np.ndarray, scale: float | None = None) -> int:
    if a.size == 0:
        return 0
    s = np.linalg.svd(a, compute_uv=False)
    return int(np.sum(s > _rank_threshold(s, scale)))


def canonical_basis(q: np.ndarray) -> np.ndarray:
    """Deterministic orthonormal basis of span(q) for orthonormal q.

    Pivoted Gram-Schmidt on the columns of the projector q q^H: at each step
    take the standard basis vector with the largest residual projection
    (ties to the lowest index) and fix its phase so the pivot entry is real
    and positive.
    """
    n, r = q.shape
    if r == 0:
        return np.zeros((n, 0), dtype=np.complex128)
    resid = q @ adj(q)
    out = np.empty((n, r), dtype=np.complex128)
    for j in range(r):
        norms = np.linalg.norm(resid, axis=0)
        top = norms.max()
        piv = int(np.flatnonzero(norms >= top * (1.0 - 1e-8))[0])
        v = resid[:, piv] / norms[piv]
        v = v * (abs(v[piv]) / v[piv])
        out[:, j] = v
        resid = resid - np.outer(v, v.conj() @ resid)
    return out


def orth(a: np.ndarray, scale: float | None = None) -> np.ndarray:
    """Canonical orthonormal basis of the column space of a."""
    a = cplx(a)
    if a.size == 0:
        return np.zeros((a.shape[0], 0), dtype=np.complex128)
    u, s, _ = np.linalg.svd(a, full_matrices=False)
    r = int(np.sum(s > _rank_threshold(s, scale)))
    return canonical_basis(u[:, :r])


def null_space(a: np.ndarray, scale: float | None = None) -> np.ndarray:
    """Canonical orthonormal basis of ker a."""
    a = cplx(a)
    ncols = a.shape[1]
    if ncols == 0:
        return np.zeros((0, 0), dtype=np.complex128)
    if a.shape[0] == 0:
        return np.eye(ncols, dtype=np.complex128)
    _, s, vh = np.linalg.svd(a, full_matrices=True)
    r = int(np.sum(s > _rank_threshold(s, scale)))
    return canonical_basis(adj(vh[r:]))


def projector(q: np.ndarray) -> np.ndarray:
    return q @ adj(q)


def subspace_distance(q1: np.ndarray, q2: np.ndarray) -> float:
    """Frobenius distance between the orthogonal projectors onto two subspaces."""
    return float(np.linalg.norm(projector(q1) - projector(q2)))


def contained_in(q_small: np.ndarray, q_big: np.ndarray) -> float:
    """Residual of span(q_small) inside span(q_big); zero iff contained."""
    if q_small.shape[1] == 0:
        return 0.0
    return float(np.linalg.norm(q_small - q_big @ (adj(q_big) @ q_small)))


def hermitian_eigh(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a = cplx(a)
    return np.linalg.eigh(0.5 * (a + adj(a)))


def kernel_cutoff(lam_max: float) -> float:
    return tolerances().kernel * (1.0 + lam_max)


def kernel_basis(lap: np.ndarray) -> np.ndarray:
    """Canonical orthonormal basis of the kernel of a Hermitian PSD matrix."""
    n = lap.shape[0]
    if n == 0:
        return np.zeros((0, 0), dtype=np.complex128)
    w, v = hermitian_eigh(lap)
    lam_max = max(float(abs(w).max()), 0.0)
    k = int(np.sum(w < kernel_cutoff(lam_max)))
    return canonical_basis(v[:, :k])


def green(lap: np.ndarray) -> np.ndarray:
    """Pseudo-inverse of a Hermitian PSD matrix: inverse off the kernel, zero on it."""
    n = lap.shape[0]
    if n == 0:
        return np.zeros((0, 0), dtype=np.complex128)
    w, v = hermitian_eigh(lap)
    lam_max = float(abs(w).max())
    cut = tolerances().rank * max(lam_max, 1.0)
    inv = np.where(w > cut, 1.0 / np.where(w > cut, w, 1.0), 0.0)
    return (v * inv) @ adj(v)


def lstsq(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Minimum-norm least-squares solution with the package rank cutoff."""
    a = cplx(a)
    b = cplx(b)
    if a.shape[1] == 0:
        return np.zeros((0,) + b.shape[1:], dtype=np.complex128)
    if a.shape[0] == 0:
        return np.zeros((a.shape[1],) + b.shape[1:], dtype=np.complex128)
    u, s, vh = np.linalg.svd(a, full_matrices=False)
    r = int(np.sum(s > _rank_threshold(s, None)))
    return adj(vh[:r]) @ ((adj(u[:, :r]) @ b) / (s[:r] if b.ndim == 1 else s[:r, None]))


def block(rows: list[list[np.ndarray | None]], row_dims: list[int], col_dims: list[int]) -> np.ndarray:
    """Assemble a dense block matrix; None entries are zero blocks."""
    out = np.zeros((sum(row_dims), sum(col_dims)), dtype=np.complex128)
    r0 = 0
    for i, rd in enumerate(row_dims):
        c0 = 0
        for j, cd in enumerate(col_dims):
            blk = rows[i][j]
            if blk is not None and rd and cd:
                out[r0 : r0 + rd, c0 : c0 + cd] = blk
            c0 += cd
        r0 += rd
    return out


def annulus_sample(rng: np.random.Generator, count: int, r_min: float = 0.05, r_max: float = 5.0) -> list[complex]:
    """Points drawn uniformly (by area) from the annulus r_min <= |h| <= r_max."""
    rad = np.sqrt(rng.uniform(r_min**2, r_max**2, size=count))
    ang = rng.uniform(0.0, 2 * np.pi, size=count)
    return [complex(x) for x in rad * np.exp(1j * ang)]
