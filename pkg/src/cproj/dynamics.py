"""Curves on the family charts: flow lines, geodesics and J-planar curves.

Also tracks the eigenvalues of ``A`` and the scalar curvature of companion
metrics along flow lines, and evaluates the closed-form expressions for the
scalar curvature in the cases L2 and D2.

Scalar-curvature sign.  The curvature engine uses ``Ric_jl = R^i_jil``, under
which the round sphere has positive scalar curvature.  The closed forms are
written for the opposite convention (Ricci contracted on the last index), so
flow-line curvature is reported with ``sign=-1`` by default.  Both
conventions are available through the ``sign`` argument.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import geometry as geo
from .families import (ComplexPair, DomainError, FamilySpec, LieConstants, RealSplit, classify_point, locus_signs,
                       domain_violation, eval_ghat, eval_structure, mu_jets, polyder, polyval,
                       vector_field)
from .verifier import ResidualReport, parallel_map

MIN_STEPS = 16
BLOWUP = 1e8
WEDGE_TOL = 1e-10
SCAL_SIGN = -1
CSV_HEADER = ("tau", "x", "y", "s", "t")


# -- curve containers -------------------------------------------------------------

@dataclass
class CurveSample:
    t: float
    point: np.ndarray
    velocity: np.ndarray
    acceleration: Optional[np.ndarray] = None


@dataclass
class Curve:
    """Samples of an integrated curve; ``exited`` marks a truncated integration."""

    family: str
    samples: list = field(default_factory=list)
    exited: bool = False
    reason: str = ""

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def params(self) -> np.ndarray:
        return np.array([s.t for s in self.samples])

    @property
    def points(self) -> np.ndarray:
        return np.array([s.point for s in self.samples])

    @property
    def endpoint(self) -> np.ndarray:
        return self.samples[-1].point

    def rows(self) -> list[list[float]]:
        return [[s.t, *s.point] for s in self.samples]

    def to_csv(self, stream=None) -> str:
        return write_csv(CSV_HEADER, self.rows(), stream)

    def to_dict(self) -> dict:
        return dict(family=self.family, exited=self.exited, reason=self.reason,
                    columns=list(CSV_HEADER), rows=self.rows())


@dataclass
class ScalCurve:
    taus: np.ndarray
    values: np.ndarray
    source: str  # numeric, closed_form_L2 or closed_form_D2
    points: Optional[np.ndarray] = None

    def rows(self) -> list[list[float]]:
        pts = self.points if self.points is not None else np.full((len(self.taus), 4), np.nan)
        return [[t, *p, v] for t, p, v in zip(self.taus, pts, self.values)]

    def to_csv(self, stream=None) -> str:
        return write_csv(CSV_HEADER + ("scal",), self.rows(), stream)

    def to_dict(self) -> dict:
        return dict(source=self.source, columns=list(CSV_HEADER + ("scal",)), rows=self.rows())


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def write_csv(header: Sequence[str], rows: Sequence[Sequence[float]], stream=None) -> str:
    """Write rows with 17 significant digits; returns the text as well."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    text = buf.getvalue()
    if stream is not None:
        stream.write(text)
    return text


def to_json(obj) -> str:
    return json.dumps(obj.to_dict(), indent=2, allow_nan=True)


# -- RK4 -----------------------------------------------------------------------------

def _rk4_step(f: Callable, y: np.ndarray, h: float) -> np.ndarray:
    k1 = f(y)
    k2 = f(y + 0.5 * h * k1)
    k3 = f(y + 0.5 * h * k2)
    k4 = f(y + h * k3)
    return y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def _field(spec: FamilySpec) -> Callable:
    if vector_field(spec, np.zeros(4)) is None:
        raise DomainError(f"{spec.id} carries no c-projective vector field")
    return lambda p: np.array([float(c) for c in vector_field(spec, p)])


def _field_violation(spec: FamilySpec, p) -> Optional[str]:
    return None if np.all(np.isfinite(p)) else "non-finite state"


def integrate_flow(spec: FamilySpec, p0, tau_max: float, steps: int = 256, domain: str = "metric") -> Curve:
    """Fixed-step RK4 integration of the flow of ``v`` from ``p0`` up to ``tau_max``.

    Leaving the domain truncates the curve and sets ``exited``.  With
    ``domain="metric"`` the domain is the family's (where ``g`` is regular);
    ``domain="field"`` only asks for a finite state, since the vector fields
    themselves extend across the singular loci of the metric.
    """
    if steps < MIN_STEPS:
        raise ValueError(f"steps must be at least {MIN_STEPS}")
    if domain not in ("metric", "field"):
        raise ValueError("domain must be 'metric' or 'field'")
    check = domain_violation if domain == "metric" else _field_violation
    p0 = np.asarray(p0, dtype=float)
    why = check(spec, p0)
    if why is not None:
        raise DomainError(f"{spec.id}: start point outside domain: {why}")
    f = _field(spec)
    h = float(tau_max) / steps
    if tau_max != 0 and abs(h) < 1e-14 * max(1.0, abs(tau_max)):
        raise ValueError("step underflow")
    curve = Curve(spec.id)
    y = p0.copy()
    signs = locus_signs(spec, y) if domain == "metric" else None
    curve.samples.append(CurveSample(0.0, y.copy(), f(y)))
    for k in range(1, steps + 1):
        y = _rk4_step(f, y, h)
        why = check(spec, y) if np.all(np.isfinite(y)) else "non-finite state"
        if why is None and signs is not None:
            why, signs = _crossing(spec, y, signs)
        if why is not None:
            curve.exited, curve.reason = True, f"left the domain at tau={k * h:.6g}: {why}"
            break
        curve.samples.append(CurveSample(k * h, y.copy(), f(y)))
    return curve


def _crossing(spec: FamilySpec, y: np.ndarray, signs: np.ndarray) -> tuple[Optional[str], np.ndarray]:
    now = locus_signs(spec, y)
    if np.any(now * signs < 0):
        return "crossed a singular locus between samples", now
    return None, now


def flow_map(spec: FamilySpec, p0, tau: float, max_step: float = 1 / 128) -> np.ndarray:
    """Image of ``p0`` under the time-``tau`` flow."""
    if tau == 0:
        return np.asarray(p0, dtype=float).copy()
    steps = max(MIN_STEPS, int(math.ceil(abs(tau) / max_step)))
    c = integrate_flow(spec, p0, tau, steps)
    if c.exited:
        raise DomainError(f"{spec.id}: flow {c.reason}")
    return c.endpoint


def flow_points(spec: FamilySpec, p0, taus: Sequence[float], max_step: float = 1 / 128) -> np.ndarray:
    """Flow images of ``p0`` at every grid value, integrating outward from 0."""
    taus = np.asarray(taus, dtype=float)
    out = np.empty((len(taus), 4))
    p0 = np.asarray(p0, dtype=float)
    for direction in (1, -1):
        idx = [i for i in np.argsort(direction * taus, kind="stable") if direction * taus[i] >= 0]
        p, t = p0.copy(), 0.0
        for i in idx:
            if taus[i] != t:
                p = flow_map(spec, p, taus[i] - t, max_step)
                t = taus[i]
            out[i] = p
    return out


# -- eigenvalues along the flow ------------------------------------------------------

def central_derivative(values: np.ndarray, h: float) -> np.ndarray:
    """Fourth-order central differences at interior points (two dropped per end)."""
    f = np.asarray(values)
    return (-f[4:] + 8 * f[3:-1] - 8 * f[1:-3] + f[:-4]) / (12 * h)


@dataclass
class EigenFlow:
    taus: np.ndarray
    rho: np.ndarray
    sigma: np.ndarray
    residual: float
    constants: LieConstants
    type_changes: list = field(default_factory=list)


def _roots(A0: np.ndarray):
    cls = classify_point(A0)
    if isinstance(cls, RealSplit):
        return "real", (cls.rho, cls.sigma)
    if isinstance(cls, ComplexPair):
        return "complex", (cls.rho, cls.rhobar)
    return "single", (cls.rho, cls.rho)


def eigen_along_flow(spec: FamilySpec, p0, taus: Sequence[float], constants: Optional[LieConstants] = None,
                     max_step: float = 1 / 256) -> EigenFlow:
    """Eigenvalues of ``A`` on a uniform flow grid and the residual of their Riccati equation.

    The equation is ``d rho/d tau = -delta rho^2 + (beta - gamma) rho + alpha``.
    Roots are labelled by continuity, starting from the profile's own ``rho``.
    """
    taus = np.asarray(taus, dtype=float)
    if len(taus) < 5:
        raise ValueError("need at least five grid values")
    h = taus[1] - taus[0]
    if not np.allclose(np.diff(taus), h, rtol=1e-9, atol=0):
        raise ValueError("tau grid must be uniform")
    k = constants or spec.lie_constants
    if k is None:
        raise DomainError(f"{spec.id} has no documented Lie constants")
    pts = flow_points(spec, p0, taus, max_step)
    st0 = eval_structure(spec, pts[0], order=0)
    prev = (complex(st0.rho.value), complex(st0.sigma.value))
    kind0 = None
    rho = np.empty(len(taus), dtype=complex)
    sig = np.empty(len(taus), dtype=complex)
    changes = []
    for i, p in enumerate(pts):
        kind, (a, b) = _roots(eval_structure(spec, p, order=0).A.value)
        if kind0 is not None and kind != kind0:
            changes.append((float(taus[i]), kind0, kind))
        kind0 = kind
        a, b = complex(a), complex(b)
        if abs(a - prev[0]) + abs(b - prev[1]) > abs(b - prev[0]) + abs(a - prev[1]):
            a, b = b, a
        rho[i], sig[i] = a, b
        prev = (a, b)

    def rhs(r):
        return -k.delta * r * r + (k.beta - k.gamma) * r + k.alpha

    res = 0.0
    for lam in (rho, sig):
        d = central_derivative(lam, h)
        res = max(res, float(np.max(np.abs(d - rhs(lam[2:-2])))))
    if not np.any(np.abs(rho.imag) > 0) and not np.any(np.abs(sig.imag) > 0):
        rho, sig = rho.real, sig.real
    return EigenFlow(taus, rho, sig, res, k, changes)


def riccati_normal_form(k: LieConstants) -> tuple[np.ndarray, float, float]:
    """Möbius change of eigenvalue variable bringing the Riccati law to
    ``d r/d tau = r^2 + b r + a``.

    Returns ``(P, a, b)``; the new variable is ``(P[0] @ (rho, 1)) / (P[1] @ (rho, 1))``.
    """
    # rho = u/w with (u, w)' = K (u, w) reproduces the Riccati law of k
    K = np.array([[k.beta, k.alpha], [k.delta, k.gamma]], dtype=float)
    if np.allclose(K, K[0, 0] * np.eye(2)):
        raise ValueError("scalar Lie matrix: the eigenvalues are flow-invariant")
    b, a = float(np.trace(K)), float(np.linalg.det(K))
    for p2 in (np.array([1.0, 1.0]), np.array([1.0, 0.0]), np.array([0.0, 1.0])):
        p1 = -p2 @ K
        P = np.vstack([p1, p2])
        if abs(np.linalg.det(P)) > 1e-12:
            return P, a, b
    raise AssertionError("no cyclic vector found")


def mobius(P: np.ndarray, rho):
    rho = np.asarray(rho)
    return (P[0, 0] * rho + P[0, 1]) / (P[1, 0] * rho + P[1, 1])


def tanh_template(taus, a: float, b: float, d: float) -> np.ndarray:
    """Bounded Riccati solution ``-b/2 - sqrt(c) tanh(sqrt(c) (tau + d))`` with ``c = b^2/4 - a``."""
    c = b * b / 4 - a
    if c <= 0:
        raise ValueError("the template needs two distinct real roots")
    r = math.sqrt(c)
    return -b / 2 - r * np.tanh(r * (np.asarray(taus, dtype=float) + d))


def fit_tanh_template(taus, values, a: float, b: float) -> tuple[float, float]:
    """Fit the shift ``d`` of the bounded template; returns ``(d, max deviation)``."""
    c = b * b / 4 - a
    if c <= 0:
        raise ValueError("the template needs two distinct real roots")
    r = math.sqrt(c)
    arg = (-b / 2 - np.asarray(values, dtype=float)) / r
    if np.any(np.abs(arg) >= 1):
        raise ValueError("values leave the band between the roots: not a bounded solution")
    d = float(np.mean(np.arctanh(arg) / r - np.asarray(taus, dtype=float)))
    dev = float(np.max(np.abs(tanh_template(taus, a, b, d) - values)))
    return d, dev


# -- scalar curvature along the flow -----------------------------------------------

def scal_at(spec: FamilySpec, p, sign: int = SCAL_SIGN, c: Optional[float] = None,
            C: Optional[float] = None) -> float:
    gh = eval_ghat(spec, p, order=2, c=c, C=C)
    # eval_ghat has already rejected singular values relative to their scale
    return sign * float(np.real(geo.curvature(gh, threshold=0.0)[2].value))


def scal_along_flow(spec: FamilySpec, p0, taus: Sequence[float], sign: int = SCAL_SIGN,
                    threads: Optional[int] = None) -> ScalCurve:
    """Scalar curvature of ``ĝ(spec.c, spec.C)`` at the flow images of ``p0``."""
    taus = np.asarray(taus, dtype=float)
    pts = flow_points(spec, p0, taus)
    vals = parallel_map(lambda p: scal_at(spec, p, sign), list(pts), threads)
    return ScalCurve(taus, np.array(vals), "numeric", pts)


def _l2_numerator(b: float, c1: float, c2: float, d1: float, d2: float) -> tuple:
    B = 1 + 7 * b + b * b
    h = b + 0.5
    q = b + 2
    D1, D2 = d1 * d1, d2 * d2
    return (
        2 * b * h * (D1 - D2),
        6 * (c2 * D2 - c1 * D1) * h * b + 4 * (c1 * D2 - c2 * D1) * q * b,
        6 * (c1**2 * D1 - c2**2 * D2) * h * b + 2 * (c2**2 * D1 - c1**2 * D2) * B
        + 12 * c1 * c2 * (D1 - D2) * q * b,
        2 * (c2**3 * D2 - c1**3 * D1) * h * b + 8 * (c1**3 * D2 - c2**3 * D1) * h
        + 6 * c1 * c2 * (c1 * D2 - c2 * D1) * B + 12 * c1 * c2 * (c2 * D2 - c1 * D1) * q * b,
        (c2**4 * D1 - c1**4 * D2) * q + 4 * c1 * c2 * (c1**2 * D1 - c2**2 * D2) * q * b
        + 6 * c1**2 * c2**2 * (D1 - D2) * B + 24 * c1 * c2 * (c2**2 * D1 - c1**2 * D2) * h,
        3 * c1 * c2 * (c1**3 * D2 - c2**3 * D1) * q + 24 * c1**2 * c2**2 * (c1 * D2 - c2 * D1) * h
        + 2 * c1**2 * c2**2 * (c2 * D2 - c1 * D1) * B,
        3 * c1**2 * c2**2 * (c2**2 * D1 - c1**2 * D2) * q + 8 * c1**3 * c2**3 * (D1 - D2) * h,
        c1**3 * c2**3 * (c1 * D2 - c2 * D1) * q,
    )


def l2_coefficients(spec: FamilySpec) -> tuple[tuple, tuple]:
    """Numerator ``C_0..C_7`` and denominator ``D_0..D_4`` of the L2 curvature law.

    The numerator is ``sum_k C_k c^(7-k) E^k`` with ``E = exp((beta - 1) tau)``;
    the denominator is ``sum_k D_k c^(4-k) E^k = (c - c1 E)^2 (c - c2 E)^2``.
    """
    c1, c2 = spec.c1, spec.c2
    num = _l2_numerator(spec.beta, c1, c2, spec.d1, spec.d2)
    den = (1.0, -2 * (c1 + c2), 2 * c1 * c2 + (c1 + c2) ** 2, -2 * c1 * c2 * (c1 + c2), c1**2 * c2**2)
    return num, den


def d2_coefficients(spec: FamilySpec, u2: float) -> tuple:
    """``C_0..C_4`` of the D2 curvature law (``beta != -2``) at ``u2``."""
    b, d1 = spec.beta, spec.d1
    G = polyval(spec.gfun, u2)
    Gp = polyval(polyder(spec.gfun), u2)
    Gpp = polyval(polyder(polyder(spec.gfun)), u2)
    W = d1 * d1 * (Gp * Gp - G * Gpp)
    G3 = G**3
    return (6 * b * (b + 0.5) * G3 + W,
            -12 * b * (b + 2) * G3 - 3 * W,
            6 * (1 + 7 * b + b * b) * G3 + 3 * W,
            -24 * (b + 0.5) * G3 - W,
            3 * (b + 2) * G3)


def _closed_l2(spec: FamilySpec, taus: np.ndarray) -> np.ndarray:
    if spec.c1 == spec.c2:
        raise DomainError("the L2 curvature law needs c1 != c2")
    if spec.eps != -1:
        raise DomainError("the L2 curvature law holds for the split-signature form (eps = -1)")
    c = spec.c
    num, den = l2_coefficients(spec)
    E = np.exp((spec.beta - 1) * taus)
    N = sum(num[k] * c ** (7 - k) * E**k for k in range(8))
    D = sum(den[k] * c ** (4 - k) * E**k for k in range(5))
    if np.any(D == 0):
        raise DomainError("denominator vanishes on the grid")
    pref = 3 * np.exp(3 * taus) / (spec.d1**2 * spec.d2**2 * (spec.c1 - spec.c2))
    return pref * N / D


def _closed_d2(spec: FamilySpec, taus: np.ndarray, u2: float) -> np.ndarray:
    b, c, c1, d1 = spec.beta, spec.c, spec.c1, spec.d1
    if b == -2:
        Gpp = polyval(polyder(polyder(spec.gfun)), u2)
        E = np.exp(-3 * taus)
        den = c - c1 * E
        if np.any(den == 0):
            raise DomainError("denominator vanishes on the grid")
        k = d1 * d1 * Gpp
        return -c * c / (c1 * d1 * d1 * den) * ((36 + k) * c1 * c1 * E - (18 + 2 * k) * c1 * c
                                                 + (-18 + k) * c * c / E)
    C = d2_coefficients(spec, u2)
    G = polyval(spec.gfun, u2)
    E = np.exp((b - 1) * taus)
    N = sum(C[k] * c1**k * c ** (4 - k) * E**k for k in range(5))
    D = c * c - 2 * c * c1 * E + c1 * c1 * E * E
    if np.any(D == 0):
        raise DomainError("denominator vanishes on the grid")
    return c * np.exp(3 * taus) / (c1 * d1 * d1 * G**3) * N / D


def scal_closed_form(spec: FamilySpec, taus: Sequence[float], p0=None, sign: int = SCAL_SIGN) -> ScalCurve:
    """Closed-form scalar curvature of ``ĝ`` along the flow from a normalized start.

    L2 starts at ``x = y = 0``, D2 at ``x = u1 = 0``; for D2 the constant
    ``u2`` of the flow line is read from ``p0``.  ``C`` must be 1.
    """
    taus = np.asarray(taus, dtype=float)
    if spec.C != 1:
        raise DomainError("the closed forms are normalized to C = 1")
    if spec.id == "L2":
        if p0 is not None and (p0[0] != 0 or p0[1] != 0):
            raise DomainError("the L2 closed form starts at x = y = 0")
        vals, tag = _closed_l2(spec, taus), "closed_form_L2"
    elif spec.id == "D2":
        p0 = (0.0, 0.0, 0.0, 0.0) if p0 is None else p0
        if p0[0] != 0 or p0[2] != 0:
            raise DomainError("the D2 closed form starts at x = u1 = 0")
        vals, tag = _closed_d2(spec, taus, float(p0[3])), "closed_form_D2"
    else:
        raise DomainError(f"no closed form for {spec.id}; only L2 and D2")
    return ScalCurve(taus, -sign * vals, tag)


# -- geodesics and J-planar curves ------------------------------------------------------

def frame(spec: FamilySpec, p) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(Gamma, J, g)`` values at ``p``."""
    st = eval_structure(spec, p, order=1)
    return geo.christoffel(st.g).value, st.J.value, st.g.value


def _second_order(spec: FamilySpec, p0, v0, t_max: float, steps: int,
                  force: Optional[Callable] = None) -> Curve:
    p0, v0 = np.asarray(p0, dtype=float), np.asarray(v0, dtype=float)
    if not np.any(v0):
        raise ValueError("initial velocity must be nonzero")
    if steps < MIN_STEPS:
        raise ValueError(f"steps must be at least {MIN_STEPS}")
    why = domain_violation(spec, p0)
    if why is not None:
        raise DomainError(f"{spec.id}: start point outside domain: {why}")

    def accel(p, u):
        G, J, g = frame(spec, p)
        a = -np.einsum("ijk,j,k->i", G, u, u)
        if force is not None:
            a = a + force(u, J, g)
        return a

    def f(y):
        return np.concatenate([y[4:], accel(y[:4], y[4:])])

    h = t_max / steps
    y = np.concatenate([p0, v0])
    curve = Curve(spec.id)
    curve.samples.append(CurveSample(0.0, p0.copy(), v0.copy(), accel(p0, v0)))
    signs = locus_signs(spec, p0)
    for k in range(1, steps + 1):
        try:
            with np.errstate(over="raise", invalid="raise", divide="raise"):
                y = _rk4_step(f, y, h)
        except (DomainError, FloatingPointError, np.linalg.LinAlgError) as err:
            curve.exited, curve.reason = True, f"stage failed at t={k * h:.6g}: {err}"
            break
        if not np.all(np.isfinite(y)) or np.max(np.abs(y)) > BLOWUP:
            curve.exited, curve.reason = True, f"blow-up at t={k * h:.6g}"
            break
        why = domain_violation(spec, y[:4])
        if why is None:
            why, signs = _crossing(spec, y[:4], signs)
        if why is not None:
            curve.exited, curve.reason = True, f"left the domain at t={k * h:.6g}: {why}"
            break
        curve.samples.append(CurveSample(k * h, y[:4].copy(), y[4:].copy(), accel(y[:4], y[4:])))
    return curve


def geodesic(spec: FamilySpec, p0, v0, t_max: float = 1.0, steps: int = 128) -> Curve:
    """RK4 integration of ``x'' = -Gamma(x', x')``."""
    return _second_order(spec, p0, v0, t_max, steps)


def jplanar_curve(spec: FamilySpec, p0, v0, t_max: float = 1.0, steps: int = 128, kappa: float = 0.3,
                  normal: float = 0.0, seed: int = 0) -> Curve:
    """Driven curve with ``nabla_x' x' = kappa J x' + normal * n``.

    ``n`` is a fixed chart direction projected g-orthogonally off
    ``span{x', J x'}`` and scaled to unit Euclidean length; ``normal = 0``
    gives a J-planar curve.
    """
    e = np.random.default_rng(seed).standard_normal(4)

    def force(u, J, g):
        out = kappa * (J @ u)
        if normal:
            B = np.column_stack([u, J @ u])
            M = B.T @ g @ B
            n = e - B @ np.linalg.solve(M, B.T @ g @ e)
            out = out + normal * n / np.linalg.norm(n)
        return out

    return _second_order(spec, p0, v0, t_max, steps, force)


def covariant_acceleration(spec: FamilySpec, sample: CurveSample) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    G, J, _ = frame(spec, sample.point)
    u = sample.velocity
    return sample.acceleration + np.einsum("ijk,j,k->i", G, u, u), u, J


def _outside(a: np.ndarray, B: np.ndarray) -> float:
    coef, *_ = np.linalg.lstsq(B, a, rcond=None)
    return float(np.linalg.norm(a - B @ coef))


def jplanar_residual(curve: Curve, spec: FamilySpec) -> float:
    """Largest part of ``nabla_x' x'`` outside ``span{x', J x'}``.

    The projection is Euclidean in chart coordinates, which stays well
    defined on null directions; each value is divided by ``|a| + |x'|^2``.
    """
    if len(curve) < 3:
        raise ValueError("need at least three samples")
    worst = 0.0
    for s in curve.samples:
        if s.acceleration is None:
            raise ValueError("samples carry no acceleration")
        a, u, J = covariant_acceleration(spec, s)
        Ju = J @ u
        wedge = math.sqrt(max(0.0, (u @ u) * (Ju @ Ju) - (u @ Ju) ** 2))
        if wedge < WEDGE_TOL:
            raise ValueError("velocity and J velocity are numerically dependent")
        worst = max(worst, _outside(a, np.column_stack([u, Ju])) / (np.linalg.norm(a) + u @ u))
    return worst


def geodesic_residual(curve: Curve, spec: FamilySpec) -> float:
    """Part of ``nabla_x' x'`` outside ``span{x'}``, normalized like :func:`jplanar_residual`."""
    worst = 0.0
    for s in curve.samples:
        a, u, _ = covariant_acceleration(spec, s)
        worst = max(worst, _outside(a, u[:, None]) / (np.linalg.norm(a) + u @ u))
    return worst


def energy_drift(curve: Curve, spec: FamilySpec) -> float:
    """Relative variation of ``g(x', x')`` along the curve."""
    e = np.array([s.velocity @ frame(spec, s.point)[2] @ s.velocity for s in curve.samples])
    return float(np.max(np.abs(e - e[0])) / max(abs(e[0]), 1e-300))


def killing_momentum(curve: Curve, spec: FamilySpec) -> np.ndarray:
    """``g(K1, x')`` along the curve with ``K1 = J grad(tr A / 2)``."""
    out = []
    for s in curve.samples:
        st = eval_structure(spec, s.point, order=1)
        mu1, _ = mu_jets(st.A)
        K1 = geo.hamiltonian_field(mu1, st.g, st.J).value
        out.append(float(K1 @ st.g.value @ s.velocity))
    return np.array(out)


def pushforward(spec: FamilySpec, curve: Curve, tau: float, max_step: float = 1 / 128) -> Curve:
    """Flow image of a curve; velocity and acceleration from fourth-order differences.

    Two samples at each end are dropped by the difference stencil.
    """
    ts = curve.params
    h = ts[1] - ts[0]
    if not np.allclose(np.diff(ts), h, rtol=1e-9, atol=0):
        raise ValueError("curve parameter grid must be uniform")
    if len(ts) < 5:
        raise ValueError("need at least five samples")
    P = np.array([flow_map(spec, s.point, tau, max_step) for s in curve.samples])
    vel = central_derivative(P, h)
    acc = (-P[4:] + 16 * P[3:-1] - 30 * P[2:-2] + 16 * P[1:-3] - P[:-4]) / (12 * h * h)
    out = Curve(spec.id)
    for i in range(len(vel)):
        out.samples.append(CurveSample(float(ts[i + 2]), P[i + 2], vel[i], acc[i]))
    return out


def flow_invariance_check(spec: FamilySpec, curve: Curve, taus: Sequence[float], tol: float = 1e-4,
                          control: bool = False, threads: Optional[int] = None) -> ResidualReport:
    """J-planarity of the flow images of ``curve``.

    With ``control=True`` the curve is a known non-J-planar control and each
    check must stay *above* 1e-2.
    """
    images = parallel_map(lambda t: pushforward(spec, curve, t), list(taus), threads)
    rep = ResidualReport("flow-invariance", spec.id, None, len(curve))
    for t, img in zip(taus, images):
        r = jplanar_residual(img, spec)
        if control:
            rep.add(f"jplanar_control_tau={t:g}", r, 1e-2, expect_fail=True)
        else:
            rep.add(f"jplanar_tau={t:g}", r, tol, note=f"geodesic_residual={geodesic_residual(img, spec):.3e}")
    return rep
