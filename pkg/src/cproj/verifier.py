"""Residual suites for the c-projective equations.

Each ``*_residual`` function works at a single point on jets; each
``*_suite`` function sweeps seeded sample points of a family and returns a
:class:`ResidualReport`.
"""

from __future__ import annotations

import json
import os
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from . import geometry as geo
from . import jets
from .families import (DomainError, FamilySpec, LieConstants, classify_point, eval_ghat,
                       eval_structure, mu_jets, domain_violation, symmetric_functions)
from .jets import Jet, contract

TOL_EXACT = 1e-8
TOL_FD = 1e-5
SAMPLING_MARGIN = 0.1
MAX_REJECTIONS = 1000


# -- reports ---------------------------------------------------------------------

@dataclass
class CheckResult:
    check: str
    max_residual: float
    tolerance: float
    expect_fail: bool = False
    note: str = ""

    @property
    def passed(self) -> bool:
        finite = bool(np.isfinite(self.max_residual))
        if self.expect_fail:
            return finite and self.max_residual > self.tolerance
        return finite and self.max_residual < self.tolerance


@dataclass
class ResidualReport:
    suite: str
    family: str
    seed: Optional[int]
    n_samples: int
    checks: list = field(default_factory=list)

    def add(self, check: str, value: float, tol: float, expect_fail: bool = False, note: str = "") -> CheckResult:
        r = CheckResult(check, float(value), float(tol), expect_fail, note)
        self.checks.append(r)
        return r

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name: str) -> CheckResult:
        for c in self.checks:
            if c.check == name:
                return c
        raise KeyError(name)

    def records(self) -> list[dict]:
        out = []
        for c in self.checks:
            rec = dict(suite=self.suite, family=self.family, check=c.check, n_samples=self.n_samples,
                       seed=self.seed, max_residual=c.max_residual, tolerance=c.tolerance, **{"pass": c.passed})
            if c.expect_fail:
                rec["expect"] = "fail"
            if c.note:
                rec["note"] = c.note
            out.append(rec)
        return out

    def to_text(self) -> str:
        lines = [f"suite {self.suite} family={self.family} seed={self.seed} n_samples={self.n_samples}"]
        for c in self.checks:
            tag = "PASS" if c.passed else "FAIL"
            extra = " (negative control, must exceed tolerance)" if c.expect_fail else ""
            note = f" [{c.note}]" if c.note else ""
            lines.append(f"  {c.check:<28s} max_residual={c.max_residual:.3e} tolerance={c.tolerance:.1e} {tag}{extra}{note}")
        return "\n".join(lines)

    def to_json(self) -> str:
        return json.dumps(self.records(), indent=2)


# -- sampling and parallel map -----------------------------------------------------

def family_rng(spec: FamilySpec, seed: int, stream: str = "") -> np.random.Generator:
    key = zlib.crc32(f"{spec.id}:{stream}".encode())
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(key,))))


def sample_points(spec: FamilySpec, n: int, seed: int = 0, margin: float = SAMPLING_MARGIN,
                  stream: str = "points") -> list[np.ndarray]:
    """Uniform points in the sampling box, rejection-filtered by the domain predicate."""
    rng = family_rng(spec, seed, stream)
    box = np.asarray(spec.sampling_box, dtype=float)
    out: list[np.ndarray] = []
    rejected = 0
    while len(out) < n:
        p = rng.uniform(box[:, 0], box[:, 1])
        if domain_violation(spec, p, margin) is None:
            out.append(p)
        else:
            rejected += 1
            if rejected > MAX_REJECTIONS:
                raise DomainError(f"{spec.id}: more than {MAX_REJECTIONS} rejected samples; check the sampling box")
    return out


def worker_count() -> int:
    env = os.environ.get("CPROJ_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ValueError("CPROJ_THREADS must be a positive integer") from None
    return os.cpu_count() or 1


def parallel_map(fn: Callable, items: Sequence, threads: Optional[int] = None) -> list:
    """Order-preserving map over independent sample points."""
    threads = worker_count() if threads is None else threads
    if threads <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _max(values: Iterable[float]) -> float:
    vals = list(values)
    return float(max(vals)) if vals else 0.0


# -- pointwise residuals --------------------------------------------------------------

def main_equation_rhs(g: Jet, J: Jet, A: Jet) -> np.ndarray:
    """Value-level right side ``R^i_jk`` for ``X = d_k`` and input slot ``j``."""
    g0, J0 = g.value, J.value
    dtr = A.trace().gradient()
    Lam = 0.25 * np.linalg.solve(g0, dtr)
    JL = J0 @ Lam
    gJ = g0 @ J0
    return (np.einsum("kj,i->ijk", g0, Lam) + np.einsum("j,ik->ijk", g0 @ Lam, np.eye(4))
            + np.einsum("jk,i->ijk", gJ, JL) + np.einsum("j,ik->ijk", g0 @ JL, J0))


def main_equation_defect(g: Jet, J: Jet, A: Jet, Gamma: Optional[Jet] = None) -> np.ndarray:
    if Gamma is None:
        Gamma = geo.christoffel(g)
    return geo.covariant_derivative_endo(A, Gamma).value - main_equation_rhs(g, J, A)


def main_equation_residual(g: Jet, J: Jet, A: Jet) -> float:
    """``max |nabla A - (X♭⊗Λ + Λ♭⊗X + (JX)♭⊗JΛ + (JΛ)♭⊗JX)|`` with ``Λ = grad tr A / 4``."""
    return float(np.max(np.abs(main_equation_defect(g, J, A))))


def christtrafo_defect(g: Jet, ghat: Jet, J: Jet) -> np.ndarray:
    ratio_sign = np.sign(np.linalg.det(ghat.value)) * np.sign(np.linalg.det(g.value))
    if ratio_sign <= 0:
        raise ValueError("det(ĝ)/det(g) is not positive")
    Gam = geo.christoffel(g).value
    Gamh = geo.christoffel(ghat).value
    phi = (jets.logdet(ghat) - jets.logdet(g)) * (1 / 12)
    Phi = phi.gradient()
    J0 = J.value
    PJ = Phi @ J0  # PJ[j] = Phi_l J^l_j
    I = np.eye(4)
    expected = (np.einsum("j,ik->ijk", Phi, I) + np.einsum("k,ij->ijk", Phi, I)
                - np.einsum("j,ik->ijk", PJ, J0) - np.einsum("k,ij->ijk", PJ, J0))
    return Gamh - Gam - expected


def christtrafo_residual(g: Jet, ghat: Jet, J: Jet) -> float:
    """Defect of the c-projective change of connection between ``g`` and ``ĝ``."""
    return float(np.max(np.abs(christtrafo_defect(g, ghat, J))))


def lie_pair_residual(g: Jet, J: Jet, A: Jet, v, k: LieConstants) -> tuple[float, float]:
    """Residuals of the Lie-derivative system with constants ``k``."""
    Lg = geo.lie_derivative(v, g, "metric").value
    LA = geo.lie_derivative(v, A, "endo").value
    g0, A0 = g.value, A.value
    trA = np.trace(A0)
    rg = Lg + k.delta * g0 @ A0 + (0.5 * k.delta * trA + 3 * k.gamma) * g0
    rA = LA + k.delta * A0 @ A0 - (k.beta - k.gamma) * A0 - k.alpha * np.eye(4)
    return float(np.max(np.abs(rg))), float(np.max(np.abs(rA)))


def lie_system_rows(g: Jet, A: Jet, v) -> tuple[np.ndarray, np.ndarray]:
    """Linear system ``M @ (alpha, beta, gamma, delta) = b`` at one point."""
    Lg = geo.lie_derivative(v, g, "metric").value
    LA = geo.lie_derivative(v, A, "endo").value
    g0, A0 = g.value, A.value
    trA = np.trace(A0)
    z = np.zeros(16)
    # L_v g = delta (-gA - trA g / 2) + gamma (-3 g)
    Mg = np.stack([z, z, (-3 * g0).ravel(), (-g0 @ A0 - 0.5 * trA * g0).ravel()], axis=1)
    # L_v A = alpha Id + beta A - gamma A - delta A^2
    MA = np.stack([np.eye(4).ravel(), A0.ravel(), -A0.ravel(), -(A0 @ A0).ravel()], axis=1)
    return np.vstack([Mg, MA]), np.concatenate([Lg.ravel(), LA.ravel()])


@dataclass
class LieFit:
    constants: LieConstants
    consistency: float
    n_samples: int


def fit_lie_constants(spec: FamilySpec, samples: Sequence, scale: float = 1.0) -> LieFit:
    """Least-squares recovery of ``(alpha, beta, gamma, delta)`` from the field of ``spec``.

    ``scale`` multiplies the vector field before fitting.
    """
    if len(samples) < 2:
        raise ValueError("fitting the Lie constants needs at least two samples")
    rows, rhs = [], []
    nonprop = False
    for p in samples:
        st = eval_structure(spec, p, order=1)
        if st.v is None:
            raise ValueError(f"{spec.id} carries no distinguished vector field")
        A0 = st.A.value
        if np.max(np.abs(A0 - np.trace(A0) / 4 * np.eye(4))) > 1e-8:
            nonprop = True
        M, b = lie_system_rows(st.g, st.A, st.v * scale)
        rows.append(M)
        rhs.append(b)
    if not nonprop:
        raise ValueError("A is proportional to Id at every sample; the normal system is degenerate")
    M, b = np.vstack(rows), np.concatenate(rhs)
    if np.linalg.matrix_rank(M) < 4:
        raise ValueError("degenerate normal system for the Lie constants")
    sol = np.linalg.lstsq(M, b, rcond=None)[0]
    k = LieConstants(alpha=sol[0], beta=sol[1], gamma=sol[2], delta=sol[3])
    consistency = float(np.max(np.abs(M @ sol - b)))
    return LieFit(k, consistency, len(samples))


def flow_solution_Av(g: Jet, J: Jet, v) -> Jet:
    """``A_v = g^{-1} L_v g - tr(g^{-1} L_v g) Id / 6``."""
    Lg = geo.lie_derivative(v, g, "metric")
    ginv = jets.inv(g).truncate(Lg.order)
    B = contract("ik,kj->ij", ginv, Lg)
    return B - jets.Jet.constant(np.eye(4), B.order) * B.trace() * (1 / 6)


def perturbation_field(g: Jet, J: Jet, rng: np.random.Generator) -> Jet:
    """Random g-symmetric, J-commuting endomorphism field of unit C^1 size.

    The field is ``g^{-1} H`` with ``H`` the J-invariant part of a random
    symmetric matrix.  It is scaled so that the largest of ``|B|``,
    ``|nabla B|`` and the right side of the metrisability equation for ``B``
    is one, i.e. the size is measured in the units of the residual itself.
    """
    S = rng.normal(size=(4, 4))
    S = S + S.T
    Jt = J.transpose()
    H = (contract("ij,jk->ik", contract("ij,jk->ik", Jt, S), J) + S) * 0.5
    B = contract("ik,kj->ij", jets.inv(g), H)
    nabla = geo.covariant_derivative_endo(B, geo.christoffel(g)).value
    rhs = main_equation_rhs(g, J, B)
    size = max(float(np.max(np.abs(B.value))), float(np.max(np.abs(nabla))), float(np.max(np.abs(rhs))))
    return B * (1 / size)


# -- eigenvalue jets ----------------------------------------------------------------------

def eigenvalue_jets(A: Jet) -> tuple[Jet, Jet, Jet, Jet]:
    """``(rho, sigma, mu1, mu2)`` as jets from the polynomial identities.

    Complex-conjugate pairs are returned as complex jets.
    """
    mu1, mu2 = mu_jets(A)
    disc = mu1 * mu1 - mu2 * 4
    if disc.value < 0:
        disc = Jet(disc.coeffs.astype(complex), disc.order)
    r = jets.sqrt(disc)
    return (mu1 - r) * 0.5, (mu1 + r) * 0.5, mu1, mu2


# -- suites ---------------------------------------------------------------------------------

def kahler_suite(spec: FamilySpec, n: int = 100, seed: int = 0, tol: float = TOL_EXACT,
                 threads: Optional[int] = None) -> ResidualReport:
    pts = sample_points(spec, n, seed)

    def one(p):
        st = eval_structure(spec, p, order=1)
        return geo.structure_residuals(st.g, st.omega, st.J)

    res = parallel_map(one, pts, threads)
    rep = ResidualReport("kahler", spec.id, seed, n)
    for key in ("J2", "hermitian", "domega", "nablaJ", "nablag"):
        rep.add(key, _max(r[key] for r in res), tol)
    return rep


def main_equation_suite(spec: FamilySpec, n: int = 100, seed: int = 0, tol: float = TOL_EXACT,
                        perturb: float = 0.0, threads: Optional[int] = None) -> ResidualReport:
    """Metrisability of the catalog ``A``; with ``perturb`` a perturbed copy is checked too."""
    pts = sample_points(spec, n, seed)
    rng = family_rng(spec, seed, "perturb")
    seeds = rng.integers(0, 2**63, size=n)

    def one(args):
        p, s = args
        st = eval_structure(spec, p, order=1)
        base = main_equation_residual(st.g, st.J, st.A)
        pert = None
        if perturb:
            B = perturbation_field(st.g, st.J, np.random.default_rng(int(s)))
            pert = main_equation_residual(st.g, st.J, st.A + B * perturb)
        return base, pert

    res = parallel_map(one, list(zip(pts, seeds)), threads)
    rep = ResidualReport("main-equation", spec.id, seed, n)
    if perturb:
        vals = [r[1] for r in res]
        # the perturbed tensor must fail, so the suite fails with it
        rep.add("main_equation_perturbed", _max(vals), tol,
                note=f"perturbation {perturb:g}; min residual {min(vals):.3e}")
    else:
        rep.add("main_equation", _max(r[0] for r in res), tol)
    return rep


def companion_grid(spec: FamilySpec, pts: Sequence) -> list[tuple[float, float]]:
    """A 3x3 grid of ``(c, C)`` values keeping ``c`` away from the eigenvalues at ``pts``."""
    real_eigs = []
    for p in pts:
        st = eval_structure(spec, p, order=0)
        cls = classify_point(st.A.value)
        if hasattr(cls, "sigma"):
            real_eigs += [cls.rho, cls.sigma]
        elif hasattr(cls, "rhobar"):
            pass
        else:
            real_eigs.append(cls.rho)
    if spec.kind == "D":
        real_eigs.append(0.0)
    if real_eigs:
        lo, hi = min(real_eigs), max(real_eigs)
        cs = (lo - 0.75, lo - 1.5, hi + 0.75)
    else:
        cs = (-1.0, 0.5, 2.0)
    return [(c, C) for c in cs for C in (-1.0, 0.5, 2.0)]


def christtrafo_suite(spec: FamilySpec, n: int = 20, seed: int = 0, tol: float = 1e-7,
                      grid: Optional[Sequence] = None, control: bool = True,
                      threads: Optional[int] = None) -> ResidualReport:
    pts = sample_points(spec, n, seed)
    grid = companion_grid(spec, pts) if grid is None else grid

    def one(p):
        st = eval_structure(spec, p, order=1)
        worst = 0.0
        for c, C in grid:
            gh = eval_ghat(spec, p, order=1, c=c, C=C)
            worst = max(worst, christtrafo_residual(st.g, gh, st.J))
        ctrl = None
        if control:
            # bump along g_ss so a definite metric stays definite
            gh = st.g + _ds_ds(st.g.order) * (0.1 * np.sign(st.g.value[2, 2]))
            ctrl = christtrafo_residual(st.g, gh, st.J)
        return worst, ctrl

    res = parallel_map(one, pts, threads)
    rep = ResidualReport("christtrafo", spec.id, seed, n)
    rep.add("christtrafo", _max(r[0] for r in res), tol, note=f"{len(grid)} (c, C) pairs")
    if control:
        rep.add("control_non_equivalent", min(r[1] for r in res), 1e-3, expect_fail=True)
    return rep


def _ds_ds(order: int) -> Jet:
    T = jets.zeros((4, 4), order)
    T.coeffs[2, 2, 0] = 1.0
    return T


def lie_pair_suite(spec: FamilySpec, n: int = 100, seed: int = 0, tol: float = TOL_EXACT,
                   constants: Optional[LieConstants] = None, threads: Optional[int] = None) -> ResidualReport:
    k = spec.lie_constants if constants is None else constants
    rep = ResidualReport("lie-pair", spec.id, seed, n)
    if k is None:
        return rep
    pts = sample_points(spec, n, seed)

    def one(p):
        st = eval_structure(spec, p, order=1)
        return lie_pair_residual(st.g, st.J, st.A, st.v, k)

    res = parallel_map(one, pts, threads)
    rep.add("lie_g", _max(r[0] for r in res), tol, note=f"constants {k}")
    rep.add("lie_A", _max(r[1] for r in res), tol)
    return rep


def flow_solution_suite(spec: FamilySpec, n: int = 20, seed: int = 0, tol: float = TOL_EXACT,
                        threads: Optional[int] = None) -> ResidualReport:
    rep = ResidualReport("flow-solution", spec.id, seed, n)
    if spec.lie_constants is None:
        return rep
    pts = sample_points(spec, n, seed)

    def one(p):
        st = eval_structure(spec, p, order=2)
        Av = flow_solution_Av(st.g, st.J, st.v)
        A0, g0, J0 = Av.value, st.g.value, st.J.value
        return (main_equation_residual(st.g, st.J, Av),
                float(np.max(np.abs(g0 @ A0 - (g0 @ A0).T))),
                float(np.max(np.abs(A0 @ J0 - J0 @ A0))))

    res = parallel_map(one, pts, threads)
    rep.add("main_equation_Av", _max(r[0] for r in res), tol)
    rep.add("Av_symmetric", _max(r[1] for r in res), 1e-9)
    rep.add("Av_J_linear", _max(r[2] for r in res), 1e-9)
    return rep


def eigen_point_checks(spec: FamilySpec, p) -> dict:
    """Eigenvalue-gradient, Killing, commutator and orthogonality residuals at ``p``."""
    st = eval_structure(spec, p, order=2)
    g, J, A = st.g, st.J, st.A
    ginv = jets.inv(g)
    rho, sigma, mu1, mu2 = eigenvalue_jets(A)
    out = {}
    A0 = A.value
    branches = [("rho", rho), ("sigma", sigma)]
    if spec.kind == "D":
        # the constant eigenvalue carries no gradient
        c0 = st.data.get("c0", 0.0)
        moving = [lam for _, lam in branches if abs(lam.value - c0) > 1e-9] or [rho]
        branches = [("rho", moving[0])]
    for name, lam in branches:
        gr = geo.gradient(lam, g, ginv).value
        out[f"eigvec_{name}"] = float(np.max(np.abs((A0 - lam.value * np.eye(4)) @ gr)))
    K1 = geo.hamiltonian_field(mu1, g, J, ginv)
    K2 = geo.hamiltonian_field(mu2, g, J, ginv)
    V1 = geo.gradient(mu1, g, ginv)
    V2 = geo.gradient(mu2, g, ginv)
    out["killing_K1"] = geo.killing_residual(K1, g)
    out["killing_K2"] = geo.killing_residual(K2, g)
    out["hamiltonian_K1"] = geo.hamiltonian_residual(K1, mu1, st.omega)
    out["hamiltonian_K2"] = geo.hamiltonian_residual(K2, mu2, st.omega)
    out["bracket_K1_K2"] = float(np.max(np.abs(geo.bracket(K1, K2).value)))
    out["bracket_K1_V2"] = float(np.max(np.abs(geo.bracket(K1, V2).value)))
    out["bracket_V1_V2"] = float(np.max(np.abs(geo.bracket(V1, V2).value)))
    g0 = g.value
    Vs, Ks = [V1.value, V2.value], [K1.value, K2.value]
    out["orthogonal_V_K"] = float(max(abs(Vi @ g0 @ Kj) for Vi in Vs for Kj in Ks))
    return out


def eigen_structure_checks(spec: FamilySpec, samples: Sequence, tol: float = 1e-7, seed: Optional[int] = None,
                           threads: Optional[int] = None) -> ResidualReport:
    """Eigenvector gradients, Killing fields, commutators and orthogonality."""
    for p in samples:
        cls = classify_point(eval_structure(spec, p, order=0).A.value)
        if type(cls).__name__ == "SingleEigenvalue":
            raise DomainError(f"{spec.id}: sample {tuple(p)} has a single eigenvalue (outside the regular set)")
    res = parallel_map(lambda p: eigen_point_checks(spec, p), list(samples), threads)
    rep = ResidualReport("eigen-structure", spec.id, seed, len(samples))
    keys = []
    for r in res:
        keys += [k for k in r if k not in keys]
    for key in keys:
        t = TOL_EXACT if key.startswith(("killing", "hamiltonian")) else tol
        rep.add(key, _max(r.get(key, 0.0) for r in res), t)
    if spec.kind == "D":
        rep.checks[0].note = "constant eigenvalue branch skipped"
    return rep


def symmetric_function_suite(spec: FamilySpec, n: int = 100, seed: int = 0, tol: float = 1e-9) -> ResidualReport:
    """Characteristic polynomial of the catalog ``A`` against ``(t^2 - mu1 t + mu2)^2``."""
    worst = 0.0
    for p in sample_points(spec, n, seed):
        A0 = eval_structure(spec, p, order=0).A.value
        mu1, mu2 = symmetric_functions(A0, check=False)
        sq = np.polymul([1, -mu1, mu2], [1, -mu1, mu2])
        worst = max(worst, float(np.max(np.abs(np.poly(A0) - sq)) / max(1.0, np.max(np.abs(sq)))))
    rep = ResidualReport("symmetric-functions", spec.id, seed, n)
    rep.add("charpoly_square", worst, tol)
    return rep


def verify_family(spec: FamilySpec, n: int = 100, seed: int = 0, tol: float = TOL_EXACT,
                  perturb: float = 0.0, threads: Optional[int] = None) -> list[ResidualReport]:
    """All point-wise suites for one family."""
    reps = [kahler_suite(spec, n, seed, tol, threads),
            main_equation_suite(spec, n, seed, tol, perturb=perturb, threads=threads)]
    if spec.lie_constants is not None:
        reps.append(lie_pair_suite(spec, n, seed, tol, threads=threads))
        reps.append(flow_solution_suite(spec, min(n, 20), seed, tol, threads=threads))
    reps.append(christtrafo_suite(spec, min(n, 20), seed, max(tol, 1e-7), threads=threads))
    pts = sample_points(spec, min(n, 20), seed, stream="eigen")
    reps.append(eigen_structure_checks(spec, pts, max(tol, 1e-7), seed, threads))
    return reps
