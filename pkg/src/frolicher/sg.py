"""Gauduchon and E_r-sG checks for invariant Hermitian metrics, and the (n-1)-st root."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .bicomplex import Form
from .errors import DomainError, FrolicherError, NoRootError, PreconditionError, StructureError
from .models import ExteriorModel, FamilySpec, build_model, coframe_transform, conjugate, family_at, wedge
from .numerics import zero_cutoff
from .spectral import ExactnessWitness, er_closed_space, exactness_witness

MAX_LEVEL = 3


@dataclass(frozen=True, eq=False)
class HermitianMetric:
    """gamma = i sum g[j, k] phi^j ^ phibar^k."""

    g: np.ndarray

    def __post_init__(self) -> None:
        g = np.asarray(self.g, dtype=np.complex128)
        if g.ndim != 2 or g.shape[0] != g.shape[1]:
            raise StructureError(f"metric matrix must be square, got shape {g.shape}")
        if np.abs(g - g.conj().T).max(initial=0.0) > 1e-12 * (1 + np.abs(g).max(initial=0.0)):
            raise DomainError("metric matrix is not Hermitian")
        object.__setattr__(self, "g", 0.5 * (g + g.conj().T))

    @property
    def n(self) -> int:
        return self.g.shape[0]

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.g)

    @property
    def positive(self) -> bool:
        return bool(self.eigenvalues.min() > 0)

    @classmethod
    def identity(cls, n: int) -> "HermitianMetric":
        return cls(np.eye(n))

    @classmethod
    def random(cls, n: int, rng: np.random.Generator) -> "HermitianMetric":
        a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        return cls(a @ a.conj().T / n + 0.5 * np.eye(n))


def _check_size(M: ExteriorModel, gamma: HermitianMetric) -> None:
    if gamma.n != M.n:
        raise StructureError(f"metric is {gamma.n}x{gamma.n} but the model has n = {M.n}")


def fundamental_form(M: ExteriorModel, gamma: HermitianMetric) -> Form:
    _check_size(M, gamma)
    n = M.n
    v = np.zeros(M.grading.dim(1, 1), dtype=np.complex128)
    for j in range(n):
        for k in range(n):
            _, idx = M.index[(j, n + k)]
            v[idx] = 1j * gamma.g[j, k]
    return Form(2, {(1, 1): v})


def power(M: ExteriorModel, gamma: HermitianMetric, m: int) -> Form:
    """m-fold wedge of the (1,1)-form of gamma."""
    if not 0 <= m <= M.n:
        raise DomainError(f"exponent {m} outside 0..{M.n}")
    out = M.unit()
    if m == 0:
        return out
    w = fundamental_form(M, gamma)
    for _ in range(m):
        out = wedge(M, out, w)
    return out


def _require_positive(gamma: HermitianMetric) -> None:
    ev = gamma.eigenvalues
    if ev.min() <= 0:
        raise DomainError(f"metric is not positive definite: eigenvalues {np.array2string(ev, precision=6)}")


def _ddbar_top(M: ExteriorModel, gamma: HermitianMetric) -> tuple[np.ndarray, float]:
    n, B = M.n, M.bicomplex
    top = power(M, gamma, n - 1).component(n - 1, n - 1, M.grading)
    val = B.del_at(n - 1, n) @ (B.delbar_at(n - 1, n - 1) @ top)
    return val, float(np.linalg.norm(top))


def is_gauduchon(M: ExteriorModel, gamma: HermitianMetric) -> bool:
    """del delbar gamma^{n-1} = 0 within the zero tolerance."""
    _check_size(M, gamma)
    _require_positive(gamma)
    val, scale = _ddbar_top(M, gamma)
    return float(np.linalg.norm(val)) <= zero_cutoff(M.bicomplex.max_norm() ** 2 * scale)


@dataclass(frozen=True, eq=False)
class SGReport:
    gauduchon: bool
    sg_level: int | None  # 1, 2, 3 or None
    witness: ExactnessWitness | None
    del_norm: float  # |del gamma^{n-1}|

    @property
    def level_label(self) -> str:
        return "none" if self.sg_level is None else str(self.sg_level)


def del_gamma_power(M: ExteriorModel, gamma: HermitianMetric) -> np.ndarray:
    n = M.n
    top = power(M, gamma, n - 1).component(n - 1, n - 1, M.grading)
    return M.bicomplex.del_at(n - 1, n - 1) @ top


def sg_level(M: ExteriorModel, gamma: HermitianMetric) -> SGReport:
    """Smallest r <= 3 with del gamma^{n-1} E_r-exact, plus the witness."""
    if not is_gauduchon(M, gamma):
        val, _ = _ddbar_top(M, gamma)
        raise PreconditionError("metric is not Gauduchon", float(np.linalg.norm(val)))
    n, B = M.n, M.bicomplex
    alpha = del_gamma_power(M, gamma)
    for r in range(1, MAX_LEVEL + 1):
        z = er_closed_space(B, n, n - 1, r)
        res = np.linalg.norm(alpha - z @ (z.conj().T @ alpha)) if z.size else np.linalg.norm(alpha)
        if res > zero_cutoff(np.linalg.norm(alpha)) * 10:
            raise FrolicherError(f"del gamma^(n-1) is not E_{r}-closed (residual {res:.3e})")
        w = exactness_witness(B, n, n - 1, r, alpha)
        if w is not None:
            for r2 in range(r, MAX_LEVEL + 1):
                if not w.lift(B, r2).valid(B):
                    raise FrolicherError(f"level-{r} witness fails to validate at level {r2}")
            return SGReport(True, r, w, float(np.linalg.norm(alpha)))
    return SGReport(True, None, None, float(np.linalg.norm(alpha)))


# ------------------------------------------------------------------- root


def _hermitian_basis(n: int) -> list[np.ndarray]:
    """Real basis of n x n Hermitian matrices."""
    out = []
    for j in range(n):
        for k in range(j, n):
            e = np.zeros((n, n), dtype=np.complex128)
            if j == k:
                e[j, j] = 1.0
                out.append(e)
                continue
            e[j, k] = e[k, j] = 1.0
            out.append(e)
            f = np.zeros((n, n), dtype=np.complex128)
            f[j, k], f[k, j] = 1j, -1j
            out.append(f)
    return out


def root_n_minus_1(
    M: ExteriorModel, omega: Form | np.ndarray, max_steps: int = 100, tol: float = 1e-10
) -> HermitianMetric:
    """Hermitian gamma with gamma^{n-1} = omega, by damped Newton on the coefficient matrix."""
    n = M.n
    if n < 2:
        raise DomainError("the (n-1)-st root needs n >= 2")
    target = omega.component(n - 1, n - 1, M.grading) if isinstance(omega, Form) else np.asarray(omega, complex)
    if target.shape != (M.grading.dim(n - 1, n - 1),):
        raise StructureError(f"omega must live in bidegree {(n - 1, n - 1)}")
    scale = float(np.linalg.norm(target))
    if scale == 0:
        raise DomainError("omega vanishes")

    def F(g):
        return power(M, HermitianMetric(g), n - 1).component(n - 1, n - 1, M.grading)

    # exact root among diagonal metrics, read off the complementary coefficients
    ref = F(np.eye(n))
    rho = np.empty(n)
    for j in range(n):
        comp = tuple(i for i in range(n) if i != j) + tuple(n + i for i in range(n) if i != j)
        _, idx = M.index[comp]
        rho[j] = abs((target[idx] / ref[idx]).real)
    if np.all(rho > 0):
        prod = np.prod(rho) ** (1.0 / (n - 1))
        g = np.diag(prod / rho).astype(np.complex128)
    else:
        g = np.eye(n, dtype=np.complex128) * (scale / np.linalg.norm(ref)) ** (1.0 / (n - 1))

    basis = _hermitian_basis(n)

    def newton(g, goal, steps, trace):
        # a continuation target can pass near zero; measure against omega then
        gscale = max(float(np.linalg.norm(goal)), scale)
        res = F(g) - goal
        for _ in range(steps):
            err = float(np.linalg.norm(res)) / gscale
            trace.append(err)
            # one or two extra steps past tol cost nothing under quadratic convergence
            if err <= tol * 1e-3 or (err <= tol and len(trace) > 1 and err > 0.1 * trace[-2]):
                return g, True
            # d(gamma^{n-1}) = (n-1) gamma^{n-2} ^ d(gamma)
            low = power(M, HermitianMetric(g), n - 2)
            jac = np.column_stack(
                [(n - 1) * wedge(M, low, _raw_form(M, e)).component(n - 1, n - 1, M.grading) for e in basis]
            )
            # real unknowns: stack real and imaginary parts of the equations
            rhs = -np.concatenate([res.real, res.imag])
            coef = np.linalg.lstsq(np.vstack([jac.real, jac.imag]), rhs, rcond=None)[0]
            step = sum(c * e for c, e in zip(coef, basis))
            t = 1.0
            while True:
                cand = g + t * step
                new = F(cand) - goal
                if np.linalg.norm(new) < np.linalg.norm(res) or t < 1e-6:
                    break
                t *= 0.5
            g, res = cand, new
        trace.append(float(np.linalg.norm(res)) / gscale)
        return g, trace[-1] <= tol

    trace: list[float] = []
    g0 = g
    g, ok = newton(g0, target, max_steps, trace)
    if not ok:
        # continuation along the segment from gamma_0^{n-1} to omega (strictly positive forms are convex)
        start = F(g0)
        g = g0
        for s in np.linspace(0.1, 1.0, 10):
            g, ok = newton(g, (1 - s) * start + s * target, max_steps, trace)
            if not ok:
                break
    gamma = HermitianMetric(g)
    if not ok:
        raise NoRootError(f"no (n-1)-st root within {max_steps} Newton steps", trace)
    if float(np.linalg.norm(F(gamma.g) - target)) > 1e-8 * scale:
        raise NoRootError("root check failed a posteriori", trace)
    if not gamma.positive:
        raise NoRootError(f"root is not positive definite: eigenvalues {gamma.eigenvalues}", trace)
    return gamma


def _raw_form(M: ExteriorModel, e: np.ndarray) -> Form:
    # i sum e[j,k] phi^j ^ phibar^k for a not necessarily Hermitian e
    n = M.n
    v = np.zeros(M.grading.dim(1, 1), dtype=np.complex128)
    for j in range(n):
        for k in range(n):
            _, idx = M.index[(j, n + k)]
            v[idx] = 1j * e[j, k]
    return Form(2, {(1, 1): v})


# ------------------------------------------------------------ family scan


@dataclass(frozen=True, eq=False)
class FamilySGPoint:
    t: complex
    metric: HermitianMetric | None
    min_eigenvalue: float | None
    report: SGReport | None
    error: str | None

    @property
    def ok(self) -> bool:
        return self.error is None and self.report is not None


@dataclass(frozen=True, eq=False)
class FamilySGReport:
    family: str
    base: SGReport
    points: tuple[FamilySGPoint, ...]

    @property
    def positivity_maintained(self) -> bool:
        return all(pt.min_eigenvalue is not None and pt.min_eigenvalue > 0 for pt in self.points)

    @property
    def first_failure(self) -> complex | None:
        for pt in self.points:
            if not pt.ok or not pt.report.gauduchon:
                return pt.t
        return None


def _degree_vector(M: ExteriorModel, u: Form, k: int) -> np.ndarray:
    g = M.grading
    return np.concatenate([u.component(p, q, g) for p, q in g.bidegrees(k)])


def family_sg_scan(fam: FamilySpec, gamma0: HermitianMetric, t_grid: Sequence[complex], jobs: int | None = None) -> FamilySGReport:
    """Transport gamma_0 along the family and report the sG level at every t.

    With a coframe, the real d-closed form Omega = gamma_0^{n-1} - xi - conj(xi)
    (xi from the level-1 witness, when there is one) is rewritten in the
    t-coframe and gamma_t is the (n-1)-st root of its (n-1,n-1)-part. Without a
    coframe the coefficient matrix is carried over unchanged.
    """
    from .harmonic import parallel_map

    n = fam.n
    M0 = build_model(family_at(fam, 0))
    base = sg_level(M0, gamma0)
    k = 2 * n - 2
    omega0 = power(M0, gamma0, n - 1)
    if base.sg_level == 1 and base.witness is not None and base.witness.xi.size:
        xi = Form(k, {(n, n - 2): base.witness.xi})
        omega0 = omega0 - xi - conjugate(M0, xi)
    x0 = _degree_vector(M0, omega0, k)

    def one(t):
        t = complex(t)
        try:
            Mt = build_model(family_at(fam, t))
            if fam.coframe is None or n < 2:
                gamma = gamma0
            else:
                _, T = coframe_transform(fam, t, k)
                y = T @ x0
                s = Mt.grading.offsets(k)[(n - 1, n - 1)]
                gamma = root_n_minus_1(Mt, y[s])
            ev = float(gamma.eigenvalues.min())
            if ev <= 0:
                return FamilySGPoint(t, gamma, ev, None, "metric not positive definite")
            return FamilySGPoint(t, gamma, ev, sg_level(Mt, gamma), None)
        except FrolicherError as exc:
            return FamilySGPoint(t, None, None, None, f"{type(exc).__name__}: {exc}")

    return FamilySGReport(fam.name, base, tuple(parallel_map(one, list(t_grid), jobs)))
