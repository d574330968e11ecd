from math import comb

import numpy as np
import pytest

from frolicher.bicomplex import Form, validate_bicomplex
from frolicher.errors import DomainError, IntegrabilityError
from frolicher.models import (
    FAMILY_NAMES,
    MODEL_NAMES,
    StructureSpec,
    build_model,
    catalog,
    catalog_model,
    conjugate,
    coframe_transform,
    d_form,
    family_at,
    integrate,
    random_form,
    wedge,
)
from frolicher.numerics import annulus_sample


def test_torus_dims_and_zero_differentials():
    M = build_model(catalog("torus_2"))
    for p in range(3):
        for q in range(3):
            assert M.grading.dim(p, q) == comb(2, p) * comb(2, q)
    assert all(np.allclose(m, 0) for m in M.bicomplex.partial.values())
    assert all(np.allclose(m, 0) for m in M.bicomplex.partialbar.values())


def test_iwasawa_generator_differentials():
    M = catalog_model("iwasawa")
    phi3 = M.monomial_form(2)
    d3 = d_form(M, phi3)
    expected = M.monomial_form(0, 1, coeff=-1)
    assert np.allclose(d3.component(2, 0, M.grading), expected.component(2, 0))
    assert np.allclose(d3.component(1, 1, M.grading), 0)
    assert np.allclose(d_form(M, M.monomial_form(0)).to_vector(M.grading), 0)


def test_non_integrable_spec_rejected():
    # d phi^2 = phi^1 ^ phibar^1, d phi^1 = phi^2 ^ phibar^2
    spec = StructureSpec(2, ({(1, 3): 1.0}, {(0, 2): 1.0}), name="bad")
    with pytest.raises(IntegrabilityError, match="phi"):
        build_model(spec)


def test_unit_and_alternation(rng):
    M = catalog_model("iwasawa")
    u = random_form(M, rng, 3)
    assert np.allclose(wedge(M, u, M.unit()).to_vector(M.grading), u.to_vector(M.grading))
    with pytest.raises(DomainError):
        M.monomial_form(0, 0)
    phi1 = M.monomial_form(0)
    assert np.allclose(wedge(M, phi1, phi1).to_vector(M.grading), 0)


def test_wedge_sign_on_torus():
    M = catalog_model("torus_2")
    a = M.monomial_form(0, 2)  # phi^1 ^ phibar^1
    b = M.monomial_form(1, 3)  # phi^2 ^ phibar^2
    top = wedge(M, a, b)
    # phi1 phibar1 phi2 phibar2 = -phi1 phi2 phibar1 phibar2
    assert np.allclose(top.component(2, 2), [-1])


def test_wedge_overflow():
    M = catalog_model("torus_1")
    with pytest.raises(DomainError):
        wedge(M, M.monomial_form(0, 1), M.monomial_form(0))


def test_conjugate_examples():
    M = catalog_model("torus_2")
    assert np.allclose(conjugate(M, M.monomial_form(0)).component(0, 1), M.monomial_form(2).component(0, 1))
    u = M.monomial_form(0, 3, coeff=1j)  # i phi^1 ^ phibar^2
    expected = M.monomial_form(1, 2, coeff=1j)  # i phi^2 ^ phibar^1
    assert np.allclose(conjugate(M, u).component(1, 1), expected.component(1, 1))


@pytest.mark.parametrize("name", MODEL_NAMES)
def test_conjugation_exchanges_del_and_delbar(name, rng):
    M = catalog_model(name)
    B = M.bicomplex
    C = M.conjugation
    for a, b in M.grading.all_bidegrees():
        if b == M.n:
            continue
        # conj o del o conj at (a, b): (a,b) -> (b,a) -> (b+1,a) -> (a,b+1)
        bar = C[(b + 1, a)] @ B.del_at(b, a).conj() @ C[(a, b)]
        assert np.allclose(bar, B.delbar_at(a, b))
    u = random_form(M, rng, 2)
    assert np.allclose(conjugate(M, conjugate(M, u)).to_vector(M.grading), u.to_vector(M.grading))


def test_integrate():
    M = catalog_model("iwasawa")
    top = M.monomial_form(*M.top_monomial())
    assert integrate(M, top) == 1
    assert integrate(M, 3 * top) == 3
    with pytest.raises(DomainError):
        integrate(M, M.unit())


@pytest.mark.parametrize("name", MODEL_NAMES)
def test_stokes(name, rng):
    M = catalog_model(name)
    eta = random_form(M, rng, 2 * M.n - 1)
    assert abs(integrate(M, d_form(M, eta))) < 1e-10


@pytest.mark.parametrize("name", MODEL_NAMES)
def test_model_invariants(name, rng):
    M = catalog_model(name)
    assert validate_bicomplex(M.bicomplex).valid
    n = M.n
    for p in range(n + 1):
        for q in range(n + 1):
            assert M.grading.dim(p, q) == comb(n, p) * comb(n, q)
    for _ in range(5):
        ku, kv, kw = rng.integers(0, n, size=3)
        u, v, w = (random_form(M, rng, int(k)) for k in (ku, kv, kw))
        lhs = wedge(M, wedge(M, u, v), w)
        rhs = wedge(M, u, wedge(M, v, w))
        assert np.allclose(lhs.to_vector(M.grading), rhs.to_vector(M.grading))
        uv = wedge(M, u, v).to_vector(M.grading)
        vu = wedge(M, v, u).to_vector(M.grading)
        assert np.allclose(uv, (-1) ** (int(ku) * int(kv)) * vu)


@pytest.mark.parametrize("name", MODEL_NAMES)
def test_theta_multiplicative_on_wedge(name, rng):
    from frolicher.bicomplex import theta_h

    M = catalog_model(name)
    hs = annulus_sample(rng, 50)
    for h in hs:
        ku, kv = (int(x) for x in rng.integers(0, M.n + 1, size=2))
        u, v = random_form(M, rng, ku), random_form(M, rng, kv)
        lhs = theta_h(wedge(M, u, v), h)
        rhs = wedge(M, theta_h(u, h), theta_h(v, h))
        assert np.allclose(lhs.to_vector(M.grading), rhs.to_vector(M.grading))


def test_catalog_lookup():
    assert catalog("torus_2").n == 2
    assert catalog("iwasawa").equations[2] == {(0, 1): -1}
    with pytest.raises(LookupError, match="iwasawa"):
        catalog("no_such_model")


def test_family_anchor_matches_base():
    base = catalog_model("iwasawa").bicomplex
    anchored = build_model(family_at(catalog("iwasawa_family"), 0)).bicomplex
    for key in base.partial:
        assert np.allclose(base.partial[key], anchored.partial[key])
        assert np.allclose(base.partialbar[key], anchored.partialbar[key])


def test_family_values_and_domain():
    fam = catalog("iwasawa_family")
    a, b = family_at(fam, 0.1), family_at(fam, 0.2j)
    assert a.equations[:2] == b.equations[:2]
    assert a.equations[2][(0, 1)] == b.equations[2][(0, 1)]
    assert a.equations[2][(1, 3)] != b.equations[2][(1, 3)]
    with pytest.raises(DomainError):
        family_at(fam, 0.9)


@pytest.mark.parametrize("name", FAMILY_NAMES)
def test_family_grid_integrable(name):
    fam = catalog(name)
    xs = np.linspace(-0.3, 0.3, 5)
    for a in xs:
        for b in xs:
            assert validate_bicomplex(build_model(family_at(fam, complex(a, b))).bicomplex).valid


@pytest.mark.parametrize("name", FAMILY_NAMES)
def test_coframe_transform_intertwines_d(name):
    # d_t T_k = T_{k+1} d_0: the coframe change is a map of complexes
    fam = catalog(name)
    from frolicher.bicomplex import d_h_total

    m0 = build_model(family_at(fam, 0))
    for t in (0.2, 0.15 - 0.1j):
        mt = build_model(family_at(fam, t))
        for k in range(2 * fam.n):
            _, tk = coframe_transform(fam, t, k)
            _, tk1 = coframe_transform(fam, t, k + 1)
            lhs = d_h_total(mt.bicomplex, 1, k) @ tk
            rhs = tk1 @ d_h_total(m0.bicomplex, 1, k)
            assert np.allclose(lhs, rhs)


def test_digest_stable():
    assert catalog("iwasawa").digest() == catalog("iwasawa").digest()
    assert catalog("iwasawa").digest() != catalog("torus_3").digest()
    assert isinstance(catalog("iwasawa_family").digest(), str)
