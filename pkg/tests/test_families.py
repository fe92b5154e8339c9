import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cproj import families as fam
from cproj import jets
from cproj.families import (
    CATALOG, FAMILY_IDS, NAMED_IDS, ComplexPair, DomainError, FamilySpec, RealSplit,
    SingleEigenvalue, classify_point, companion_metric, eval_ghat, eval_structure, symmetric_functions,
)
from cproj.verifier import christtrafo_residual, kahler_suite, main_equation_suite, sample_points, symmetric_function_suite


def random_profile_spec(fid: str, seed: int) -> FamilySpec:
    """A general normal form with random degree-3 polynomial profile data.

    The leading affine part keeps the profiles monotone on the sampling box;
    the random higher coefficients are small enough not to break that.
    """
    rng = np.random.default_rng(seed)
    q = lambda: tuple(float(v) for v in rng.uniform(-0.15, 0.15, size=2))
    if fid == "GEN_L":
        return FamilySpec(fid, rho=(0.0, 1.0) + q(), sigma=(-2.0, 1.0) + q(), eps=int(rng.choice([-1, 1])))
    if fid == "GEN_CL":
        a, b = q(), q()
        return FamilySpec(fid, rho=(complex(*a), 1.0, complex(*b), complex(*q())))
    return FamilySpec(fid, f=(1.0, 0.5) + q(), c0=float(rng.uniform(-1.5, -0.5)))


# -- specification and catalog ---------------------------------------------------

def test_catalog_has_every_family():
    assert len(FAMILY_IDS) == 14 and len(NAMED_IDS) == 11
    assert set(CATALOG) == set(FAMILY_IDS)
    for fid in FAMILY_IDS:
        entry = fam.catalog_entry(fid)
        assert entry["id"] == fid and entry["domain"]


@pytest.mark.parametrize("fid", ["L2", "CL2", "D2"])
def test_beta_one_rejected(fid):
    with pytest.raises(DomainError, match="β must differ from 1"):
        FamilySpec(fid, beta=1)


@pytest.mark.parametrize("kw", [dict(id="L1", d1=0), dict(id="L1", eps=2), dict(id="L1", C=0),
                                dict(id="nope"), dict(id="D1", gfun=(0, 0)), dict(id="L1", box=((0, 1),))])
def test_invalid_specs(kw):
    with pytest.raises(DomainError):
        FamilySpec(**kw)


def test_spec_is_immutable():
    spec = FamilySpec("L1")
    with pytest.raises(Exception):
        spec.beta = 2.0


# -- evaluation examples ----------------------------------------------------------

def test_l1_reference_point():
    st_ = eval_structure(FamilySpec("L1", c1=1, c2=1), (2, 1, 0, 0), 2)
    assert np.trace(st_.A.value) == pytest.approx(6.0, abs=1e-14)
    assert np.array_equal(st_.v.value, [1, 1, 0, 0])


def test_l2_rho_at_origin():
    st_ = eval_structure(FamilySpec("L2", beta=0, c1=1), (0, 0.3, 0, 0), 1)
    assert st_.rho.value == 1.0
    assert st_.rho.coeff((1, 0, 0, 0)) == -1.0


def test_d2_homothety_subcase_field():
    st_ = eval_structure(FamilySpec("D2", beta=-2), (1, 0, 0, 3), 1)
    assert np.array_equal(st_.v.value, [1, 3, 1, 0])


def test_l4_field_and_rho():
    spec = FamilySpec("L4", beta=0.3)
    st_ = eval_structure(spec, (0.4, -0.5, 0.2, 0.7), 1)
    assert st_.rho.value == pytest.approx(-math.tan(0.4), abs=1e-15)
    assert np.allclose(st_.v.value, [1, 1, -(3 * 0.3 * 0.2 - 0.7), -(0.2 + 3 * 0.3 * 0.7)], atol=1e-15)


@pytest.mark.parametrize("p,why", [((1.0, 1.0, 0, 0), "rho(x) = sigma(y)")])
def test_domain_violation_l1(p, why):
    assert fam.domain_violation(FamilySpec("L1"), p) == why
    with pytest.raises(DomainError):
        eval_structure(FamilySpec("L1"), p)


def test_complex_family_needs_imaginary_part():
    with pytest.raises(DomainError):
        eval_structure(FamilySpec("CL1"), (0.3, 0.0, 0, 0))


def test_degenerate_collision_rejected():
    # rho = 1/x equals c = 1 at x = 1
    with pytest.raises(DomainError, match="collides"):
        eval_ghat(FamilySpec("D1", c=1.0), (1.0, 0, 0, 0))


def test_l2_companion_metric_is_equivalent():
    spec = FamilySpec("L2", beta=0, c1=1, c2=2, d1=1, d2=2, c=-1, C=1)
    p = (0.2, -0.3, 0.4, 0.1)
    st_ = eval_structure(spec, p, 2)
    gh = eval_ghat(spec, p, 2)
    assert abs(np.linalg.det(gh.value)) > 1e-6
    assert christtrafo_residual(st_.g, gh, st_.J) < 1e-8


@pytest.mark.parametrize("fid", FAMILY_IDS)
def test_companion_metric_linear_in_C(fid):
    spec = FamilySpec(fid)
    p = sample_points(spec, 1, 5)[0]
    g1 = eval_ghat(spec, p, 1, C=1.0).coeffs
    g2 = eval_ghat(spec, p, 1, C=2.0).coeffs
    assert np.array_equal(g2, 2 * g1)


@pytest.mark.parametrize("fid", NAMED_IDS)
def test_companion_formula_against_tensor_construction(fid):
    # The coordinate formulas agree with C g (A - c)^{-1} / det-factor, up to
    # the overall sign of the degenerate normalization.
    spec = FamilySpec(fid)
    p = sample_points(spec, 1, 2)[0]
    st_ = eval_structure(spec, p, 1)
    c = -2.5
    printed = eval_ghat(spec, p, 1, c=c).value
    built = companion_metric(st_.g, st_.A, c, spec.C).value
    sign = -1 if spec.kind == "D" else 1
    assert np.max(np.abs(printed - sign * built)) < 1e-10 * np.max(np.abs(printed))


def test_verbatim_complex_companion_is_not_equivalent():
    spec = FamilySpec("CL1")
    p = (0.1, 0.8, 0.2, -0.3)
    st_ = eval_structure(spec, p, 1)
    assert christtrafo_residual(st_.g, eval_ghat(spec, p, 1), st_.J) < 1e-8
    assert christtrafo_residual(st_.g, eval_ghat(spec, p, 1, verbatim=True), st_.J) > 1e-3


# -- point classification -----------------------------------------------------------

def test_identity_single_eigenvalue():
    assert classify_point(np.eye(4)) == SingleEigenvalue(1.0)


def test_l1_real_split():
    st_ = eval_structure(FamilySpec("L1"), (2, 1, 0, 0), 0)
    cls = classify_point(st_.A.value)
    assert isinstance(cls, RealSplit)
    assert (cls.rho, cls.sigma) == pytest.approx((1.0, 2.0), abs=1e-12)


def test_cl1_complex_pair():
    st_ = eval_structure(FamilySpec("CL1"), (0, 1, 0, 0), 0)
    cls = classify_point(st_.A.value)
    assert isinstance(cls, ComplexPair)
    assert cls.rho == pytest.approx(1j, abs=1e-12)
    assert cls.rhobar == pytest.approx(-1j, abs=1e-12)


def test_symmetric_functions_diagonal():
    assert symmetric_functions(np.diag([2.0, 3.0, 2.0, 3.0])) == (5.0, 6.0)


def test_symmetric_functions_rejects_non_square_charpoly():
    with pytest.raises(ValueError):
        symmetric_functions(np.diag([1.0, 2.0, 3.0, 4.0]))


def test_symmetric_functions_l2():
    spec = FamilySpec("L2", beta=-0.5, c1=1.3, c2=2.1)
    for x, y, s, t in sample_points(spec, 10, 1):
        st_ = eval_structure(spec, (x, y, s, t), 0)
        mu1, mu2 = symmetric_functions(st_.A.value)
        e = lambda u: math.exp(-1.5 * u)
        assert mu1 == pytest.approx(1.3 * e(x) + 2.1 * e(y), rel=1e-12)
        assert mu2 == pytest.approx(1.3 * 2.1 * e(x) * e(y), rel=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 2**32 - 1))
def test_symmetric_functions_of_planted_pair(rho, sigma, seed):
    # A = diag block with a J-invariant frame: A maps e1, Je1 -> rho and e2, Je2 -> sigma
    rng = np.random.default_rng(seed)
    J = np.array([[0, -1, 0, 0], [1, 0, 0, 0], [0, 0, 0, -1], [0, 0, 1, 0]], float)
    M = rng.normal(size=(2, 2)) + 2 * np.eye(2)
    # complex-linear change of frame commutes with J
    P = np.kron(M, np.eye(2))
    A = P @ np.diag([rho, rho, sigma, sigma]) @ np.linalg.inv(P)
    assert np.max(np.abs(A @ J - J @ A)) < 1e-9
    mu1, mu2 = symmetric_functions(A)
    assert mu1 == pytest.approx(rho + sigma, abs=1e-8)
    assert mu2 == pytest.approx(rho * sigma, abs=1e-8)


PRINTED = {
    "L1": lambda p, s: (p[0], p[1]),
    "L2": lambda p, s: (s.c1 * math.exp((s.beta - 1) * p[0]), s.c2 * math.exp((s.beta - 1) * p[1])),
    "L3": lambda p, s: (p[0], p[1]),
    "L4": lambda p, s: (-math.tan(p[0]), -math.tan(p[1])),
    "CL1": lambda p, s: complex(p[0], p[1]),
    "CL2": lambda p, s: np.exp((s.beta - 1) * complex(p[0], p[1])),
    "CL3": lambda p, s: complex(p[0], p[1]),
    "CL4": lambda p, s: -np.tan(complex(p[0], p[1])),
    "D1": lambda p, s: 1 / p[0],
    "D2": lambda p, s: s.c1 * math.exp((s.beta - 1) * p[0]),
    "D3": lambda p, s: 1 / p[0],
}


@pytest.mark.parametrize("fid", NAMED_IDS)
def test_eigenvalues_match_printed_profiles(fid):
    spec = FamilySpec(fid, beta=-0.4) if fid in ("L2", "CL2", "D2") else FamilySpec(fid)
    for p in sample_points(spec, 20, 4):
        cls = classify_point(eval_structure(spec, p, 0).A.value)
        want = PRINTED[fid](p, spec)
        if spec.kind == "L":
            assert isinstance(cls, RealSplit)
            assert sorted((cls.rho, cls.sigma)) == pytest.approx(sorted(want), abs=1e-10)
        elif spec.kind == "CL":
            assert isinstance(cls, ComplexPair)
            got = {cls.rho, cls.rhobar}
            assert min(abs(g - want) for g in got) < 1e-10
            assert min(abs(g - np.conj(want)) for g in got) < 1e-10
        else:
            assert isinstance(cls, RealSplit)
            assert sorted((cls.rho, cls.sigma)) == pytest.approx(sorted((want, 0.0)), abs=1e-10)


# -- degenerate base surface ---------------------------------------------------------------

@pytest.mark.parametrize("spec", [FamilySpec("D1"), FamilySpec("D2", beta=-2), FamilySpec("D2", beta=0.4),
                                  FamilySpec("D3"), FamilySpec("GEN_D")],
                         ids=["D1", "D2-homothety", "D2", "D3", "GEN_D"])
def test_structure_one_form_derivative(spec):
    for p in sample_points(spec, 10, 0):
        X = jets.seed_coordinates(p, 1)
        base = fam._base_surface(spec, X[2], X[3])
        tau_u1, tau_u2 = base["tau"]
        dtau = tau_u2.d(2).value - tau_u1.d(3).value
        assert abs(dtau - base["Omega"].value) < 1e-10


def test_degenerate_two_form_normalization():
    # with a nonzero constant eigenvalue the Kahler form carries (c - rho) Omega
    spec = FamilySpec("GEN_D", c0=-1.3)
    p = sample_points(spec, 1, 0)[0]
    st_ = eval_structure(spec, p, 1)
    Om = st_.data["Omega"].value
    assert st_.omega.value[2, 3] == pytest.approx((-1.3 - st_.rho.value) * Om, rel=1e-12)
    rep = kahler_suite(spec, n=20, seed=0)
    assert rep.passed, rep.to_text()


# -- sweeps ------------------------------------------------------------------------------------

def _sweep_specs():
    specs = [FamilySpec(fid) for fid in NAMED_IDS]
    specs += [random_profile_spec(fid, seed) for fid in ("GEN_L", "GEN_CL", "GEN_D") for seed in (0, 1)]
    return specs


@pytest.mark.parametrize("spec", _sweep_specs(), ids=lambda s: f"{s.id}")
def test_kahler_converse(spec):
    rep = kahler_suite(spec, n=100, seed=0, tol=1e-9)
    assert rep["nablaJ"].max_residual < 1e-8
    for key in ("J2", "hermitian", "domega", "nablag"):
        assert rep[key].max_residual < 1e-9, rep.to_text()


@pytest.mark.parametrize("spec", _sweep_specs(), ids=lambda s: f"{s.id}")
def test_metrisability_of_catalog_tensor(spec):
    rep = main_equation_suite(spec, n=100, seed=1)
    assert rep.passed, rep.to_text()


@pytest.mark.parametrize("fid", FAMILY_IDS)
def test_characteristic_polynomial_is_square(fid):
    assert symmetric_function_suite(FamilySpec(fid), n=100).passed
