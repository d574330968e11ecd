import numpy as np
import pytest

from frolicher.bicomplex import (
    Bicomplex,
    Form,
    betti,
    cohomology,
    cohomology_dim,
    d_h_total,
    del_total,
    delbar_total,
    make_bicomplex,
    theta_h,
    theta_h_cohomology_map,
    theta_h_matrix,
    validate_bicomplex,
)
from frolicher.errors import DomainError, StructureError
from frolicher.models import MODEL_NAMES, catalog_model, d_form, random_form, wedge
from frolicher.numerics import annulus_sample


def iwasawa():
    return catalog_model("iwasawa")


def test_torus_valid_and_zero():
    B = catalog_model("torus_3").bicomplex
    assert validate_bicomplex(B).valid
    for k in range(6):
        assert np.allclose(d_h_total(B, 0.3 + 2j, k), 0)


def test_iwasawa_valid():
    rep = validate_bicomplex(iwasawa().bicomplex)
    assert rep.valid
    assert rep.violations == ()


def test_sign_flip_in_del_is_caught():
    B = iwasawa().bicomplex
    M = iwasawa()
    # flip del(phi^3 ^ phibar^3); del del and del delbar + delbar del then fail at (1,1)
    _, j = M.index[(2, 5)]
    partial = {k: v.copy() for k, v in B.partial.items()}
    partial[(1, 1)][:, j] *= -1
    rep = validate_bicomplex(Bicomplex(B.grading, partial, B.partialbar))
    assert not rep.valid
    assert (1, 1) in {v.bidegree for v in rep.violations}
    assert rep.max_residual > rep.threshold


def test_shape_mismatch_is_structural():
    B = iwasawa().bicomplex
    partial = dict(B.partial)
    partial[(1, 0)] = np.zeros((2, 2))
    with pytest.raises(StructureError, match=r"\(1, 0\)"):
        validate_bicomplex(Bicomplex(B.grading, partial, B.partialbar))


def test_d_h_endpoints():
    B = iwasawa().bicomplex
    for k in range(6):
        assert np.allclose(d_h_total(B, 0, k), delbar_total(B, k))
        assert np.allclose(d_h_total(B, 1, k), del_total(B, k) + delbar_total(B, k))


def test_d_h_degree_guard():
    B = iwasawa().bicomplex
    with pytest.raises(DomainError):
        d_h_total(B, 1, 7)
    with pytest.raises(DomainError):
        d_h_total(B, 1, -1)


@pytest.mark.parametrize("name", MODEL_NAMES)
def test_d_h_squares_to_zero(name):
    B = catalog_model(name).bicomplex
    for h in annulus_sample(np.random.default_rng(7), 8):
        for k in range(2 * B.n - 1):
            assert np.allclose(d_h_total(B, h, k + 1) @ d_h_total(B, h, k), 0, atol=1e-10)


def test_theta_h_examples():
    g = iwasawa().grading
    v = np.arange(1, g.dim(1, 1) + 1, dtype=complex)
    u = Form(2, {(1, 1): v})
    assert np.allclose(theta_h(u, 2).component(1, 1), 2 * v)
    w = Form.from_vector(g, 2, np.arange(g.total_dim(2)))
    for key, comp in theta_h(w, 1).components.items():
        assert np.allclose(comp, w.component(*key))
    proj = theta_h(w, 0)
    assert np.allclose(proj.component(0, 2), w.component(0, 2))
    assert np.allclose(proj.component(1, 1), 0)
    assert np.allclose(proj.component(2, 0), 0)


def test_theta_matrix_is_diagonal_powers():
    g = iwasawa().grading
    t = theta_h_matrix(g, 1j, 2)
    expected = np.concatenate([np.full(g.dim(p, q), 1j**p) for p, q in g.bidegrees(2)])
    assert np.allclose(np.diag(t), expected)


def test_cohomology_examples():
    assert cohomology(catalog_model("torus_2").bicomplex, "derham", 1).dimension == 4
    B = iwasawa().bicomplex
    assert cohomology(B, "derham", 1).dimension == 4
    assert cohomology(B, "dh", 1, 0).dimension == 5
    assert cohomology(B, "delbar", 1).dimension == 5
    assert cohomology_dim(B, 1, 0.5) == 4


def test_cohomology_basis_is_orthonormal_and_closed():
    B = iwasawa().bicomplex
    for k in range(7):
        c = cohomology(B, "dh", k, 0.7 - 0.2j)
        assert np.allclose(c.basis.conj().T @ c.basis, np.eye(c.dimension))
        if k < 6:
            assert np.allclose(d_h_total(B, 0.7 - 0.2j, k) @ c.basis, 0, atol=1e-10)
        assert len(c.forms()) == c.dimension


def test_betti_iwasawa():
    assert betti(iwasawa().bicomplex) == (1, 4, 8, 10, 8, 4, 1)


def test_theta_cohomology_identity_at_one():
    B = iwasawa().bicomplex
    for k in range(7):
        t = theta_h_cohomology_map(B, 1, k)
        assert np.allclose(t, np.eye(t.shape[0]))


def test_theta_cohomology_torus_diagonal():
    B = catalog_model("torus_2").bicomplex
    t = theta_h_cohomology_map(B, 1j, 2)
    g = B.grading
    expected = np.concatenate([np.full(g.dim(p, q), 1j**p) for p, q in g.bidegrees(2)])
    assert np.allclose(t, np.diag(expected))


def test_theta_cohomology_iwasawa_invertible():
    t = theta_h_cohomology_map(iwasawa().bicomplex, 0.5, 1)
    assert t.shape == (4, 4)
    assert abs(np.linalg.det(t)) > 1e-6


def test_theta_cohomology_rejects_zero():
    with pytest.raises(DomainError):
        theta_h_cohomology_map(iwasawa().bicomplex, 0, 1)


def test_theta_multiplicative(rng):
    g = iwasawa().grading
    u = Form.from_vector(g, 3, rng.normal(size=g.total_dim(3)) + 0j)
    a, b = 0.3 + 1.1j, -2.0 + 0.5j
    lhs = theta_h(theta_h(u, a), b)
    rhs = theta_h(u, a * b)
    assert np.allclose(lhs.to_vector(g), rhs.to_vector(g))
    back = theta_h(theta_h(u, a), 1 / a)
    assert np.allclose(back.to_vector(g), u.to_vector(g))


@pytest.mark.parametrize("h", [0, 0.4, 1j, -1.3 + 0.2j])
def test_theta_intertwines_d(h, rng):
    B = iwasawa().bicomplex
    g = B.grading
    for k in range(6):
        x = rng.normal(size=g.total_dim(k)) + 1j * rng.normal(size=g.total_dim(k))
        lhs = theta_h_matrix(g, h, k + 1) @ d_h_total(B, 1, k) @ x
        rhs = d_h_total(B, h, k) @ theta_h_matrix(g, h, k) @ x
        assert np.allclose(lhs, rhs)


@pytest.mark.parametrize("h", [0, 1, 0.5j, 2 - 1j])
def test_leibniz(h, rng):
    M = catalog_model("nilmanifold_e3")
    for ku, kv in [(1, 1), (1, 2), (2, 2), (0, 3)]:
        u, v = random_form(M, rng, ku), random_form(M, rng, kv)
        lhs = d_form(M, wedge(M, u, v), h)
        rhs = wedge(M, d_form(M, u, h), v) + (-1) ** ku * wedge(M, u, d_form(M, v, h))
        assert np.allclose(lhs.to_vector(M.grading), rhs.to_vector(M.grading))


def test_make_bicomplex_and_form_guards():
    B = make_bicomplex(1, {(0, 0): 1, (1, 0): 1, (0, 1): 1, (1, 1): 1}, {}, {})
    assert validate_bicomplex(B).valid
    with pytest.raises(StructureError):
        Form(2, {(1, 0): np.zeros(1)})
    with pytest.raises(StructureError):
        Form.pure(B.grading, 1, 0, np.zeros(3))
    with pytest.raises(DomainError):
        Form.zero(B.grading, 1) + Form.zero(B.grading, 2)
