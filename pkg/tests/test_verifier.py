import json

import numpy as np
import pytest

from cproj import geometry as geo
from cproj import verifier as ver
from cproj.families import FAMILY_IDS, NAMED_IDS, DomainError, FamilySpec, LieConstants, eval_ghat, eval_structure
from cproj.jets import Jet


def _pts(fid, n=5, seed=0, **kw):
    spec = FamilySpec(fid, **kw)
    return spec, ver.sample_points(spec, n, seed, stream="verifier-tests")


def _close(k: LieConstants, want, tol=1e-7):
    got = (k.gamma, k.alpha, k.delta, k.beta)
    return max(abs(a - b) for a, b in zip(got, want)) <= tol


# -- metrisability -------------------------------------------------------------------

def test_identity_solves_main_equation():
    spec, pts = _pts("CL4")
    for p in pts:
        st = eval_structure(spec, p, 1)
        assert ver.main_equation_residual(st.g, st.J, Jet.constant(np.eye(4), 1)) < 1e-12


@pytest.mark.parametrize("fid", FAMILY_IDS)
def test_perturbed_tensor_fails_at_injected_scale(fid):
    rep = ver.main_equation_suite(FamilySpec(fid), n=100, seed=0, perturb=1e-3)
    chk = rep["main_equation_perturbed"]
    assert not rep.passed
    # the suite residual lands within a factor 10 of 1e-3 and every sample fails
    least = float(chk.note.split("min residual ")[1])
    assert 1e-4 <= chk.max_residual <= 1e-2
    assert least > chk.tolerance


def test_perturbation_field_is_admissible():
    spec, pts = _pts("L4")
    rng = np.random.default_rng(0)
    for p in pts:
        st = eval_structure(spec, p, 1)
        B = ver.perturbation_field(st.g, st.J, rng).value
        g0, J0 = st.g.value, st.J.value
        assert np.max(np.abs(g0 @ B - (g0 @ B).T)) < 1e-12
        assert np.max(np.abs(B @ J0 - J0 @ B)) < 1e-12


# -- connection change ------------------------------------------------------------------

def test_homothety_has_no_connection_change():
    spec, pts = _pts("L2")
    for p in pts:
        st = eval_structure(spec, p, 1)
        assert ver.christtrafo_residual(st.g, st.g * 2.0, st.J) < 1e-13


def test_l3_companion_metrics():
    spec, pts = _pts("L3")
    for p in pts:
        st = eval_structure(spec, p, 1)
        for c, C in [(-1.0, 1.0), (2.0, -0.5), (-3.0, 4.0)]:
            assert ver.christtrafo_residual(st.g, eval_ghat(spec, p, 1, c=c, C=C), st.J) < 1e-7


def test_generic_metric_is_not_equivalent():
    spec, pts = _pts("L3")
    for p in pts:
        st = eval_structure(spec, p, 1)
        bump = ver._ds_ds(1) * (0.1 * np.sign(st.g.value[2, 2]))
        assert ver.christtrafo_residual(st.g, st.g + bump, st.J) > 1e-3


def test_determinant_ratio_sign_checked():
    spec, pts = _pts("L1")
    st = eval_structure(spec, pts[0], 1)
    with pytest.raises(ValueError):
        ver.christtrafo_residual(st.g, st.g * np.diag([1.0, 1.0, 1.0, -1.0]), st.J)


@pytest.mark.parametrize("fid", FAMILY_IDS)
def test_companion_suite_every_family(fid):
    rep = ver.christtrafo_suite(FamilySpec(fid), n=10, seed=0)
    assert rep.passed, rep.to_text()
    assert "9 (c, C) pairs" in rep["christtrafo"].note


# -- Lie derivative system ------------------------------------------------------------------

def test_l1_killing_constants():
    spec, pts = _pts("L1")
    k = LieConstants(alpha=1, beta=0, gamma=0, delta=0)
    assert str(k) == "(0,1;0,0)"
    for p in pts:
        st = eval_structure(spec, p, 1)
        rg, rA = ver.lie_pair_residual(st.g, st.J, st.A, st.v, k)
        assert rg < 1e-9 and rA < 1e-9
        assert geo.killing_residual(st.v, st.g) < 1e-9


def test_l2_homothety_constants():
    spec, pts = _pts("L2", beta=0.35)
    k = LieConstants(alpha=0, beta=0.35, gamma=1, delta=0)
    for p in pts:
        st = eval_structure(spec, p, 1)
        assert max(ver.lie_pair_residual(st.g, st.J, st.A, st.v, k)) < 1e-8


def test_l4_constants():
    spec, pts = _pts("L4", beta=0.2)
    k = LieConstants(alpha=-1, beta=0.2, gamma=0.2, delta=1)
    for p in pts:
        st = eval_structure(spec, p, 1)
        assert max(ver.lie_pair_residual(st.g, st.J, st.A, st.v, k)) < 1e-8


def test_wrong_constants_fail():
    spec, pts = _pts("L4", beta=0.2)
    st = eval_structure(spec, pts[0], 1)
    assert max(ver.lie_pair_residual(st.g, st.J, st.A, st.v, LieConstants(1, 0, 0, 0))) > 1e-2


@pytest.mark.parametrize("fid", NAMED_IDS)
def test_documented_constants_every_family(fid):
    rep = ver.lie_pair_suite(FamilySpec(fid), n=100, seed=0)
    assert rep.passed, rep.to_text()


@pytest.mark.parametrize("fid,want", [("L3", (1, 1, 0, 1)), ("D1", (0, 0, 1, 0)), ("D3", (1, 0, 1, 1)),
                                      ("L1", (0, 1, 0, 0)), ("CL4", (0.3, -1, 1, 0.3))])
def test_fit_recovers_constants(fid, want):
    spec, pts = _pts(fid, n=20, **({"beta": 0.3} if fid == "CL4" else {}))
    fit = ver.fit_lie_constants(spec, pts)
    assert _close(fit.constants, want)
    assert fit.consistency < 1e-7


@pytest.mark.parametrize("beta", [-2.0, -0.7, 0.0, 2.5])
def test_fit_d2_orientation(beta):
    spec, pts = _pts("D2", n=20, beta=beta)
    fit = ver.fit_lie_constants(spec, pts)
    assert _close(fit.constants, (1, 0, 0, beta))
    assert fit.consistency < 1e-7
    assert _close(spec.lie_constants, (1, 0, 0, beta), 0)


@pytest.mark.parametrize("lam", [0.5, -2.0, 3.0])
def test_fit_scale_equivariant(lam):
    spec, pts = _pts("L4", n=10, beta=0.2)
    base = ver.fit_lie_constants(spec, pts).constants.matrix
    scaled = ver.fit_lie_constants(spec, pts, scale=lam).constants.matrix
    assert np.max(np.abs(scaled - lam * base)) < 1e-9


def test_fit_preconditions():
    spec, pts = _pts("L3", n=3)
    with pytest.raises(ValueError):
        ver.fit_lie_constants(spec, pts[:1])
    gspec, gpts = _pts("GEN_L", n=3)
    with pytest.raises(ValueError):
        ver.fit_lie_constants(gspec, gpts)


# -- flow-induced solution ------------------------------------------------------------------------

def test_killing_field_gives_zero_solution():
    spec, pts = _pts("L1")
    for p in pts:
        st = eval_structure(spec, p, 2)
        assert np.max(np.abs(ver.flow_solution_Av(st.g, st.J, st.v).value)) < 1e-12


def test_homothety_gives_minus_identity():
    spec, pts = _pts("L2")
    for p in pts:
        st = eval_structure(spec, p, 2)
        Av = ver.flow_solution_Av(st.g, st.J, st.v).value
        assert np.max(np.abs(Av + np.eye(4))) < 1e-10


def test_essential_field_solution():
    spec, pts = _pts("L4")
    for p in pts:
        st = eval_structure(spec, p, 2)
        Av = ver.flow_solution_Av(st.g, st.J, st.v)
        A0 = Av.value
        assert np.max(np.abs(A0 - np.trace(A0) / 4 * np.eye(4))) > 1e-2
        assert ver.main_equation_residual(st.g, st.J, Av) < 1e-8


@pytest.mark.parametrize("fid", NAMED_IDS)
def test_flow_solution_suite(fid):
    rep = ver.flow_solution_suite(FamilySpec(fid), n=10)
    assert rep.passed, rep.to_text()


# -- eigenvalue structure -------------------------------------------------------------------------------

def test_l1_gradient_is_eigenvector():
    spec = FamilySpec("L1")
    st = eval_structure(spec, (2, 1, 0, 0), 2)
    gr = geo.gradient(st.rho, st.g).value
    assert np.count_nonzero(np.abs(gr) > 1e-14) == 1 and abs(gr[0]) > 0
    assert np.max(np.abs(st.A.value @ gr - st.rho.value * gr)) < 1e-14


def test_cl2_commutators():
    spec, pts = _pts("CL2")
    rep = ver.eigen_structure_checks(spec, pts)
    for key in ("bracket_K1_K2", "bracket_K1_V2", "bracket_V1_V2"):
        assert rep[key].max_residual < 1e-7


def test_degenerate_family_skips_constant_branch():
    spec, pts = _pts("D3")
    rep = ver.eigen_structure_checks(spec, pts)
    names = [c.check for c in rep.checks]
    assert "eigvec_rho" in names and "eigvec_sigma" not in names
    assert "constant eigenvalue" in rep.checks[0].note
    assert rep.passed


def test_single_eigenvalue_sample_rejected():
    spec = FamilySpec("L1")
    with pytest.raises(DomainError):
        ver.eigen_structure_checks(spec, [np.array([1.0, 1.0, 0, 0])])


@pytest.mark.parametrize("fid", FAMILY_IDS)
def test_killing_and_orthogonality(fid):
    spec, pts = _pts(fid, n=10)
    rep = ver.eigen_structure_checks(spec, pts)
    assert rep.passed, rep.to_text()
    assert rep["killing_K1"].max_residual < 1e-8
    assert rep["orthogonal_V_K"].max_residual < 1e-7


# -- reports, sampling and threading ------------------------------------------------------------------

def test_report_serialization():
    rep = ver.ResidualReport("demo", "L1", 7, 3)
    rep.add("ok", 1e-12, 1e-8)
    rep.add("control", 0.5, 1e-3, expect_fail=True, note="negative control")
    recs = json.loads(rep.to_json())
    assert [r["pass"] for r in recs] == [True, True]
    assert set(recs[0]) >= {"suite", "check", "n_samples", "seed", "max_residual", "tolerance", "pass"}
    assert recs[1]["expect"] == "fail"
    text = rep.to_text()
    assert text.splitlines()[0].startswith("suite demo family=L1 seed=7")
    assert "PASS" in text and rep.passed
    rep.add("bad", float("nan"), 1.0)
    assert not rep.passed


def test_sampling_is_deterministic_and_in_domain():
    spec = FamilySpec("L4")
    a = ver.sample_points(spec, 50, 123)
    b = ver.sample_points(spec, 50, 123)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    assert not all(np.array_equal(x, y) for x, y in zip(a, ver.sample_points(spec, 50, 124)))
    from cproj.families import domain_violation
    assert all(domain_violation(spec, p, ver.SAMPLING_MARGIN) is None for p in a)


def test_sampling_gives_up_on_empty_domain():
    spec = FamilySpec("L1", box=((1.0, 1.0), (1.0, 1.0), (0, 1), (0, 1)))
    with pytest.raises(DomainError):
        ver.sample_points(spec, 1, 0)


def test_thread_count(monkeypatch):
    monkeypatch.setenv("CPROJ_THREADS", "3")
    assert ver.worker_count() == 3
    monkeypatch.setenv("CPROJ_THREADS", "zero")
    with pytest.raises(ValueError):
        ver.worker_count()


def test_parallel_map_matches_serial():
    spec = FamilySpec("CL3")
    serial = ver.kahler_suite(spec, n=30, seed=2, threads=1).records()
    threaded = ver.kahler_suite(spec, n=30, seed=2, threads=4).records()
    assert serial == threaded


def test_verify_family_runs_all_suites():
    reps = ver.verify_family(FamilySpec("L3"), n=20, seed=0)
    assert {r.suite for r in reps} == {"kahler", "main-equation", "lie-pair", "flow-solution",
                                       "christtrafo", "eigen-structure"}
    assert all(r.passed for r in reps)
