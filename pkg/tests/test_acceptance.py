"""The eleven acceptance criteria, one test each, at the stated tolerances.

Each test prints one PASS/FAIL line; the lines are repeated in the terminal
summary (see conftest.py).
"""

import functools
import subprocess
import sys
import time

import numpy as np

from frolicher.bicomplex import Form, betti, cohomology, cohomology_dim, d_h_total, theta_h_cohomology_map, validate_bicomplex
from frolicher.harmonic import (
    favb_scan,
    harmonic_tower,
    image_dh_w,
    kernel_w,
    neumann_tower,
    three_space_decomposition,
    tilde_laplacian_r_h,
)
from frolicher.models import MODEL_NAMES, catalog, catalog_model, conjugate, d_form, random_form
from frolicher.numerics import annulus_sample, projector, rank, subspace_distance, zero_cutoff
from frolicher.sg import HermitianMetric, family_sg_scan, is_gauduchon, power, root_n_minus_1, sg_level
from frolicher.spectral import (
    degeneration_page,
    dr_map,
    dr_page_dims,
    er_closed_space,
    is_type_one_one,
    page_cell,
    page_totals,
    theta0_map,
)
from oracles import _kernel, from_bicomplex, stacked_min_solution, type11_residual

SEED = 0
LINES: list[str] = []


def criterion(number, title):
    def wrap(fn):
        @functools.wraps(fn)
        def run():
            try:
                ok, detail = fn()
            except Exception as exc:  # a crash is a failure of the criterion
                ok, detail = False, f"{type(exc).__name__}: {exc}"
            line = f"{'PASS' if ok else 'FAIL'}  criterion {number}  {title}" + (f"  [{detail}]" if detail else "")
            LINES.append(line)
            print(line)
            assert ok, line

        return run

    return wrap


# 1 -------------------------------------------------------------------------


@criterion(1, "structure identities")
def test_structure_identities():
    worst, slowest = 0.0, 0.0
    for name in MODEL_NAMES:
        start = time.perf_counter()
        B = catalog_model(name).bicomplex
        if not validate_bicomplex(B).valid:
            return False, f"{name} fails validation"
        for h in annulus_sample(np.random.default_rng(SEED), 8):
            for k in range(2 * B.n - 1):
                a, b = d_h_total(B, h, k + 1), d_h_total(B, h, k)
                res = float(np.abs(a @ b).max(initial=0.0))
                scale = 1 + np.linalg.norm(a, 2) * np.linalg.norm(b, 2) if a.size and b.size else 1
                worst = max(worst, res / scale)
        slowest = max(slowest, time.perf_counter() - start)
    return worst <= 1e-10 and slowest < 1.0, f"max scaled residual {worst:.1e}, slowest model {slowest:.2f}s"


# 2 -------------------------------------------------------------------------


@criterion(2, "theta isomorphism")
def test_theta_isomorphism():
    min_det = np.inf
    for name in MODEL_NAMES:
        B = catalog_model(name).bicomplex
        b = betti(B)
        for h in annulus_sample(np.random.default_rng(SEED), 8):
            for k in range(2 * B.n + 1):
                if cohomology_dim(B, k, h) != b[k]:
                    return False, f"{name} k={k} h={h}"
                t = theta_h_cohomology_map(B, h, k)
                if not np.isfinite(np.linalg.cond(t)):
                    return False, f"{name} k={k} singular"
                min_det = min(min_det, abs(np.linalg.det(t)))
    return min_det >= 1e-12, f"min |det| {min_det:.2e}"


# 3 -------------------------------------------------------------------------


@criterion(3, "two-route page agreement")
def test_two_route_pages():
    iw_time = 0.0
    for name in MODEL_NAMES:
        start = time.perf_counter()
        M = catalog_model(name)
        B = M.bicomplex
        top = degeneration_page(B) + 1
        tower = harmonic_tower(M, top)
        for r in range(1, top + 1):
            dims = dr_page_dims(B, r)
            for p, q in B.grading.all_bidegrees():
                e = page_cell(B, p, q, r).dim
                if tower.dim(r, p, q) != e:
                    return False, f"{name} r={r} {(p, q)}: H {tower.dim(r, p, q)} vs E {e}"
                if dims[(p, q)] != page_cell(B, p, q, r + 1).dim:
                    return False, f"{name} r={r} {(p, q)}: d_r homology"
                if r < top and rank(tower.d_omega(r, p, q)) != rank(dr_map(B, r, p, q)):
                    return False, f"{name} r={r} {(p, q)}: rank d_r^omega"
        if name == "iwasawa":
            iw_time = time.perf_counter() - start
    return iw_time < 30, f"iwasawa {iw_time:.2f}s"


# 4 -------------------------------------------------------------------------


@criterion(4, "degeneration pages")
def test_degeneration_pages():
    expected = {"torus_1": 1, "torus_2": 1, "torus_3": 1, "primary_kodaira": 1, "iwasawa": 2}
    for name, dp in expected.items():
        B = catalog_model(name).bicomplex
        oracle = from_bicomplex(B)
        if degeneration_page(B) != dp or oracle.degeneration_page() != dp:
            return False, name
    B = catalog_model("iwasawa").bicomplex
    lib = (page_totals(B, 1)[1], page_totals(B, 2)[1])
    orc = (from_bicomplex(B).page_totals(1)[1], from_bicomplex(B).page_totals(2)[1])
    return lib == orc == (5, 4), f"iwasawa degree-1 totals {lib}"


# 5 -------------------------------------------------------------------------


@criterion(5, "kernel identities and stability")
def test_kernel_identities():
    worst = 0.0
    for name in ("iwasawa", "primary_kodaira"):
        M = catalog_model(name)
        for h in annulus_sample(np.random.default_rng(SEED), 6):
            for k in range(2 * M.n + 1):
                base = kernel_w(M, 1, h, k)
                for r in (2, 3):
                    worst = max(worst, subspace_distance(kernel_w(M, r, h, k), base))
                    if 0 < k < 2 * M.n:
                        lap = tilde_laplacian_r_h(M, r, h, k)
                        P = projector(image_dh_w(M, h, k))
                        # projector invariance: P L P = L P
                        defect = np.linalg.norm(P @ lap @ P - lap @ P) / (1 + np.linalg.norm(lap))
                        worst = max(worst, defect)
    return worst <= 1e-8, f"max distance/defect {worst:.1e}"


# 6 -------------------------------------------------------------------------


@criterion(6, "FAVB rank constancy")
def test_favb_rank_constancy():
    M = catalog_model("iwasawa")
    for k in range(1, 6):
        rep = favb_scan(M, k, 2)
        if not rep.constant_rank:
            return False, f"k={k} jumps at {rep.jumps}"
    neg = favb_scan(M, 1, 1)
    if neg.jumps != (0,):
        return False, f"negative control jumps {neg.jumps}"
    cmd = [sys.executable, "-m", "frolicher", "favb", "--model", "iwasawa", "--k", "1", "--r", "1", "--format", "csv"]
    status = subprocess.run(cmd, capture_output=True).returncode
    return status == 1, f"negative control exit status {status}"


# 7 -------------------------------------------------------------------------


def _tower_system(B, p, q, r):
    """del u_l = delbar u_{l+1}, u_0 = alpha, unknowns u_1..u_{r-1}, built from the raw blocks."""
    cells = [(p + l, q - l) for l in range(1, r)]
    rows = [B.dim(p + l + 1, q - l) for l in range(r - 1)]
    cols = [B.dim(*c) for c in cells]
    a_alpha = np.zeros((sum(rows), B.dim(p, q)), dtype=complex)
    a_u = np.zeros((sum(rows), sum(cols)), dtype=complex)
    ro, co = np.cumsum([0] + rows), np.cumsum([0] + cols)
    for l in range(r - 1):
        rs = slice(ro[l], ro[l + 1])
        if l == 0:
            a_alpha[rs] = B.del_at(p, q)
        else:
            a_u[rs, co[l - 1] : co[l]] = B.del_at(*cells[l - 1])
        a_u[rs, co[l] : co[l + 1]] = -B.delbar_at(*cells[l])
    return a_alpha, a_u


@criterion(7, "Neumann minimality")
def test_neumann_minimality():
    rng = np.random.default_rng(SEED)
    worst, count = 0.0, 0
    for name in MODEL_NAMES:
        M = catalog_model(name)
        B = M.bicomplex
        for r in (2, 3):
            cells = [bd for bd in B.grading.all_bidegrees() if er_closed_space(B, *bd, r).shape[1]]
            for i in range(20):
                p, q = cells[i % len(cells)]
                z = er_closed_space(B, p, q, r)
                alpha = z @ (rng.normal(size=z.shape[1]) + 1j * rng.normal(size=z.shape[1]))
                us = neumann_tower(M, Form(p + q, {(p, q): alpha}), r)
                got = np.concatenate([u.component(p + l, q - l) for l, u in enumerate(us, start=1)])
                a_alpha, a_u = _tower_system(B, p, q, r)
                ref = stacked_min_solution(a_alpha, a_u, alpha)
                worst = max(worst, float(np.linalg.norm(got - ref)))
                for l, u in enumerate(us, start=1):
                    zz = er_closed_space(B, p + l, q - l, r - l)
                    if zz.size:
                        worst = max(worst, float(np.linalg.norm(zz.conj().T @ u.component(p + l, q - l))))
                count += 1
    return worst <= 1e-8, f"{count} forms, max deviation {worst:.1e}"


# 8 -------------------------------------------------------------------------


@criterion(8, "3-space decompositions")
def test_three_space():
    worst = 0.0
    for name in MODEL_NAMES:
        M = catalog_model(name)
        for r in (0, 1, 2):
            for p, q in M.grading.all_bidegrees():
                worst = max(worst, max(three_space_decomposition(M, r, p, q).defects().values()))
    return worst <= 1e-8, f"max defect {worst:.1e}"


# 9 -------------------------------------------------------------------------


def _true_class(M, rng):
    """Real closed (1,1)-form plus d of a real 1-form."""
    B, g = M.bicomplex, M.grading
    k = _kernel(d_h_total(B, 1, 2)[:, g.offsets(2)[(1, 1)]])
    beta = Form(2, {(1, 1): k @ (rng.normal(size=k.shape[1]) + 1j * rng.normal(size=k.shape[1]))})
    eta = random_form(M, rng, 1)
    return beta + conjugate(M, beta) + d_form(M, eta + conjugate(M, eta))


def _false_class(M, rng, h2):
    """Real closed 2-form whose class the oracle says has no pure (1,1) representative."""
    for _ in range(100):
        c = Form.from_vector(M.grading, 2, h2.basis @ (rng.normal(size=h2.dimension) + 0j))
        a = c + conjugate(M, c)
        if type11_residual(M.bicomplex, a.to_vector(M.grading)) > 1e-6:
            return a
    return None


@criterion(9, "theta_0 and type-(1,1)")
def test_theta0_and_type11():
    for name in MODEL_NAMES:
        B = catalog_model(name).bicomplex
        for k in range(2 * B.n + 1):
            t = theta0_map(B, k)
            if rank(t) != t.shape[0]:
                return False, f"theta_0 not surjective on {name} k={k}"
    rng = np.random.default_rng(SEED)
    pool = ["torus_2", "iwasawa", "primary_kodaira", "kodaira_torus", "nilmanifold_e3"]
    n_true = n_false = 0
    for i in range(10):
        M = catalog_model(pool[i % len(pool)])
        a = _true_class(M, rng)
        if type11_residual(M.bicomplex, a.to_vector(M.grading)) > 1e-8:
            return False, "oracle rejects a constructed (1,1) class"
        res = is_type_one_one(M, a)
        cert = res.certificate if res else None
        if not res or cert.bidegrees() != [(1, 1)] or d_form(M, cert).norm() > 1e-9:
            return False, f"true class {i} on {M.name}"
        # the certificate differs from alpha by an exact form: same De Rham class
        diff = (a - cert).to_vector(M.grading)
        dmat = d_h_total(M.bicomplex, 1, 1)
        if np.linalg.norm(dmat @ np.linalg.lstsq(dmat, diff, rcond=None)[0] - diff) > 1e-8:
            return False, f"certificate {i} not cohomologous"
        n_true += 1
        h2 = cohomology(M.bicomplex, "derham", 2)
        b = _false_class(M, rng, h2)
        if b is None:
            return False, f"oracle found no non-(1,1) class on {M.name}"
        if is_type_one_one(M, b):
            return False, f"false class {i} on {M.name} accepted"
        n_false += 1
    return n_true == n_false == 10, f"{n_true} true, {n_false} false"


# 10 ------------------------------------------------------------------------


@criterion(10, "sG suite")
def test_sg_suite():
    for name in ("torus_1", "torus_2", "torus_3"):
        M = catalog_model(name)
        if M.n < 2:
            continue
        g = HermitianMetric.identity(M.n)
        if not is_gauduchon(M, g) or sg_level(M, g).sg_level != 1:
            return False, name
    iw = catalog_model("iwasawa")
    g = HermitianMetric.identity(3)
    if d_form(iw, power(iw, g, 2)).norm() > zero_cutoff(1.0) or sg_level(iw, g).sg_level != 1:
        return False, "iwasawa identity metric"
    worst = 0.0
    for name in MODEL_NAMES:
        M = catalog_model(name)
        if M.n < 2:
            continue
        rng = np.random.default_rng(SEED)
        for _ in range(20):
            g = HermitianMetric.random(M.n, rng)
            got = root_n_minus_1(M, power(M, g, M.n - 1))
            worst = max(worst, float(np.linalg.norm(got.g - g.g) / np.linalg.norm(g.g)))
    if worst > 1e-8:
        return False, f"root round-trip {worst:.1e}"
    xs = np.linspace(-0.3, 0.3, 5)
    ts = [complex(a, b) for b in xs for a in xs]
    rep = family_sg_scan(catalog("iwasawa_family"), HermitianMetric.identity(3), ts)
    ok = len(rep.points) == 25 and all(pt.ok for pt in rep.points) and rep.positivity_maintained
    return ok, f"root round-trip {worst:.1e}, family grid positive: {rep.positivity_maintained}"


# 11 ------------------------------------------------------------------------

RUNS = [
    ["validate", "--model", "iwasawa"],
    ["pages", "--model", "nilmanifold_e3"],
    ["dh", "--model", "iwasawa"],
    ["favb", "--model", "iwasawa", "--k", "2"],
    ["tower", "--model", "iwasawa"],
    ["sg", "--model", "iwasawa", "--metric", "random"],
    ["family", "--model", "iwasawa_family", "--k", "1", "--t-grid", "square:0.3:3", "--h-grid", "0,0.5,1i"],
    ["family", "--model", "iwasawa_family", "--mode", "sg", "--t-grid", "square:0.3:5"],
]


@criterion(11, "determinism")
def test_determinism():
    def suite():
        out = []
        for argv in RUNS:
            for fmt in ("csv", "json"):
                cmd = [sys.executable, "-m", "frolicher", *argv, "--seed", str(SEED), "--format", fmt]
                out.append(subprocess.run(cmd, capture_output=True, check=False).stdout)
        return out

    a, b = suite(), suite()
    same = sum(x == y for x, y in zip(a, b))
    return same == len(a) and all(a), f"{same}/{len(a)} reports byte-identical"
