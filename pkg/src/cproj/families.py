"""Catalog of Kähler structures carrying an essential c-projective vector field.

Three chart conventions are used:

* Liouville (``L*``, ``GEN_L``): coordinates ``(x, y, s, t)``.
* complex Liouville (``CL*``, ``GEN_CL``): ``(x, y, s, t)`` with ``z = x + i y``.
* degenerate (``D*``, ``GEN_D``): ``(x, t, u1, u2)``.

Every evaluator works on coordinate jets, so all derivatives needed by the
verification suites come out of the same code path as the values.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Any, Callable, Optional, Sequence, Union

import numpy as np

from . import jets
from .geometry import complex_structure_from, form_from_components, metric_from_components
from .jets import Jet, contract

FAMILY_IDS = ("L1", "L2", "L3", "L4", "CL1", "CL2", "CL3", "CL4", "D1", "D2", "D3",
              "GEN_L", "GEN_CL", "GEN_D")
NAMED_IDS = FAMILY_IDS[:11]

IMAG_TOL = 1e-10
COLLISION_TOL = 1e-10


class DomainError(ValueError):
    """A point or parameter choice lies outside a family's domain."""


@dataclass(frozen=True)
class LieConstants:
    """Matrix ``(gamma alpha; delta beta)`` of the Lie derivative on solutions."""

    alpha: float
    beta: float
    gamma: float
    delta: float

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.gamma, self.alpha], [self.delta, self.beta]])

    def scaled(self, lam: float) -> "LieConstants":
        return LieConstants(lam * self.alpha, lam * self.beta, lam * self.gamma, lam * self.delta)

    def __str__(self) -> str:
        return f"({_fmt(self.gamma)},{_fmt(self.alpha)};{_fmt(self.delta)},{_fmt(self.beta)})"


def _fmt(x: float) -> str:
    r = round(x)
    if abs(x - r) < 1e-9:
        return str(int(r))
    return f"{x:.10g}"


@dataclass(frozen=True)
class FamilySpec:
    """A family identifier with its numeric parameters.

    ``c`` and ``C`` parametrize the companion metric.  ``rho``, ``sigma`` and
    ``f`` are ascending polynomial coefficients used by the ``GEN_*`` forms;
    ``c0`` is the constant eigenvalue of ``GEN_D``.  ``gfun`` holds the
    coefficients of ``G(u2)`` for degenerate families.
    """

    id: str
    beta: float = 0.0
    c1: float = 1.0
    c2: float = 2.0
    d1: float = 1.0
    d2: float = 1.0
    eps: int = 1
    c: float = -1.0
    C: float = 1.0
    rho: tuple = ()
    sigma: tuple = ()
    f: tuple = ()
    c0: float = 0.0
    gfun: tuple = (2.0, 0.0, 1.0)
    box: Optional[tuple] = None

    def __post_init__(self):
        if self.id not in FAMILY_IDS:
            raise DomainError(f"unknown family {self.id!r}; expected one of {', '.join(FAMILY_IDS)}")
        if self.id in ("L2", "CL2", "D2") and self.beta == 1:
            raise DomainError("β must differ from 1")
        if self.d1 == 0:
            raise DomainError("d1 must be nonzero")
        if self.id in ("L2",) and self.d2 == 0:
            raise DomainError("d2 must be nonzero")
        if self.eps not in (1, -1):
            raise DomainError("eps must be +1 or -1")
        if self.C == 0:
            raise DomainError("C must be nonzero")
        if self.id in ("L1", "L3", "L4", "D1", "D3") and self.c1 == 0:
            raise DomainError("c1 must be nonzero")
        if self.id in ("CL1", "CL2", "CL3", "CL4") and self.c1 == 0 and self.c2 == 0:
            raise DomainError("c1 + i c2 must be nonzero")
        if self.id in ("L1", "L3", "L4") and self.c2 == 0:
            raise DomainError("c2 must be nonzero")
        if self.id in ("L2", "D2") and self.c1 == 0:
            raise DomainError("c1 must be nonzero")
        if self.id == "L2" and self.c2 == 0:
            raise DomainError("c2 must be nonzero")
        for name in ("rho", "sigma", "f", "gfun"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if self.id == "GEN_L" and not self.rho:
            object.__setattr__(self, "rho", (0.0, 1.0, 0.2, 0.05))
        if self.id == "GEN_L" and not self.sigma:
            object.__setattr__(self, "sigma", (-2.0, 1.0, -0.1, 0.02))
        if self.id == "GEN_CL" and not self.rho:
            object.__setattr__(self, "rho", (0.0, 1.0, 0.1 + 0.2j, 0.05j))
        if self.id == "GEN_D" and not self.rho and not self.f:
            object.__setattr__(self, "f", (1.0, 0.5, 0.1))
            if self.c0 == 0.0:
                object.__setattr__(self, "c0", -0.5)
        if not self.gfun or all(g == 0 for g in self.gfun):
            raise DomainError("G(u2) must not vanish identically")
        if self.box is not None:
            b = tuple(tuple(float(v) for v in iv) for iv in self.box)
            if len(b) != 4 or any(len(iv) != 2 or iv[0] > iv[1] for iv in b):
                raise DomainError("sampling box needs four (low, high) intervals")
            object.__setattr__(self, "box", b)

    @property
    def kind(self) -> str:
        if self.id.startswith("CL") or self.id == "GEN_CL":
            return "CL"
        if self.id.startswith("L") or self.id == "GEN_L":
            return "L"
        return "D"

    @property
    def chart(self) -> tuple[str, str, str, str]:
        return ("x", "t", "u1", "u2") if self.kind == "D" else ("x", "y", "s", "t")

    @property
    def sampling_box(self) -> tuple:
        return self.box if self.box is not None else DEFAULT_BOXES[self.id]

    @property
    def lie_constants(self) -> Optional[LieConstants]:
        return documented_lie_constants(self)

    def replace(self, **kw) -> "FamilySpec":
        return dataclasses.replace(self, **kw)

    def params(self) -> dict:
        return {f.name: getattr(self, f.name) for f in dataclasses.fields(self) if f.name != "id"}


DEFAULT_BOXES = {
    "L1": ((1.5, 2.5), (0.2, 1.0), (-1, 1), (-1, 1)),
    "L2": ((-0.5, 0.5), (-0.5, 0.5), (-1, 1), (-1, 1)),
    "L3": ((0.2, 0.8), (-0.8, -0.2), (-1, 1), (-1, 1)),
    "L4": ((0.2, 1.2), (-1.2, -0.2), (-1, 1), (-1, 1)),
    "CL1": ((-0.5, 0.5), (0.5, 1.2), (-1, 1), (-1, 1)),
    "CL2": ((-0.5, 0.5), (0.5, 1.2), (-1, 1), (-1, 1)),
    "CL3": ((-0.5, 0.5), (0.5, 1.2), (-1, 1), (-1, 1)),
    "CL4": ((-0.5, 0.5), (0.3, 0.9), (-1, 1), (-1, 1)),
    "D1": ((0.5, 1.5), (-1, 1), (-0.5, 0.5), (-1, 1)),
    "D2": ((-0.5, 0.5), (-1, 1), (-0.5, 0.5), (-1, 1)),
    "D3": ((0.5, 1.5), (-1, 1), (-0.5, 0.5), (-1, 1)),
    "GEN_L": ((-0.5, 0.5), (-0.5, 0.5), (-1, 1), (-1, 1)),
    "GEN_CL": ((-0.5, 0.5), (0.5, 1.0), (-1, 1), (-1, 1)),
    "GEN_D": ((0.5, 1.5), (-1, 1), (-0.5, 0.5), (-1, 1)),
}

# Matrices of L_v on the solution space, keyed by family.  D2's orientation
# is confirmed by fitting (see tests); the degenerate cases use the basis in
# which the degenerate solution comes first.
_LIE = {
    "L1": lambda b: LieConstants(alpha=1, beta=0, gamma=0, delta=0),
    "L2": lambda b: LieConstants(alpha=0, beta=b, gamma=1, delta=0),
    "L3": lambda b: LieConstants(alpha=1, beta=1, gamma=1, delta=0),
    "L4": lambda b: LieConstants(alpha=-1, beta=b, gamma=b, delta=1),
    "D1": lambda b: LieConstants(alpha=0, beta=0, gamma=0, delta=1),
    "D2": lambda b: LieConstants(alpha=0, beta=b, gamma=1, delta=0),
    "D3": lambda b: LieConstants(alpha=0, beta=1, gamma=1, delta=1),
}


def documented_lie_constants(spec: FamilySpec) -> Optional[LieConstants]:
    key = spec.id[1:] if spec.id.startswith("CL") else spec.id
    maker = _LIE.get(key)
    return None if maker is None else maker(spec.beta)


# -- small helpers -------------------------------------------------------------

Num = Union[Jet, float, complex]


def polyval(coeffs: Sequence, x):
    """Horner evaluation with ascending coefficients; works on jets and numbers."""
    out = 0.0 * x + coeffs[-1] if len(coeffs) else 0.0 * x
    for a in reversed(coeffs[:-1]):
        out = out * x + a
    return out


def polyder(coeffs: Sequence) -> tuple:
    return tuple(k * coeffs[k] for k in range(1, len(coeffs))) or (0.0,)


def _exp(a):
    return jets.exp(a) if isinstance(a, Jet) else np.exp(a)


def _tan(a):
    return jets.tan(a) if isinstance(a, Jet) else np.tan(a)


def _cos(a):
    return jets.cos(a) if isinstance(a, Jet) else np.cos(a)


def _sign_value(a) -> float:
    v = a.value if isinstance(a, Jet) else a
    return float(np.sign(np.real(v)))


# -- profile data per family ---------------------------------------------------
# Each profile maps coordinate objects to the functions entering the metric.
# F and G only appear squared, so profiles return Fsq and Gsq directly.

def _liouville_profile(spec: FamilySpec, x, y) -> dict:
    b, c1, c2 = spec.beta, spec.c1, spec.c2
    fid = spec.id
    if fid == "L1":
        return dict(rho=x, drho=1.0 + 0 * x, sigma=y, dsigma=1.0 + 0 * y,
                    Fsq=c1**2 + 0 * x, Gsq=c2**2 + 0 * y)
    if fid == "L2":
        rho = c1 * _exp((b - 1) * x)
        sig = c2 * _exp((b - 1) * y)
        return dict(rho=rho, drho=(b - 1) * rho, sigma=sig, dsigma=(b - 1) * sig,
                    Fsq=spec.d1**2 * _exp(-(b + 2) * x), Gsq=spec.d2**2 * _exp(-(b + 2) * y))
    if fid == "L3":
        return dict(rho=x, drho=1.0 + 0 * x, sigma=y, dsigma=1.0 + 0 * y,
                    Fsq=c1**2 * _exp(-3 * x), Gsq=c2**2 * _exp(-3 * y))
    if fid == "L4":
        tx, ty = _tan(x), _tan(y)
        cx, cy = _cos(x), _cos(y)
        return dict(rho=-tx, drho=-(1 + tx * tx), sigma=-ty, dsigma=-(1 + ty * ty),
                    Fsq=c1**2 * _exp(-3 * b * x) / (cx * _sign_value(cx)),
                    Gsq=c2**2 * _exp(-3 * b * y) / (cy * _sign_value(cy)))
    if fid == "GEN_L":
        return dict(rho=polyval(spec.rho, x), drho=polyval(polyder(spec.rho), x),
                    sigma=polyval(spec.sigma, y), dsigma=polyval(polyder(spec.sigma), y),
                    Fsq=1.0 + 0 * x, Gsq=1.0 + 0 * y)
    raise AssertionError(fid)


def _complex_profile(spec: FamilySpec, z) -> dict:
    b = spec.beta
    k = complex(spec.c1, spec.c2) ** 2
    fid = spec.id
    if fid == "CL1":
        return dict(rho=z, drho=1.0 + 0 * z, Fsq=k + 0 * z)
    if fid == "CL2":
        rho = _exp((b - 1) * z)
        return dict(rho=rho, drho=(b - 1) * rho, Fsq=k * _exp(-(b + 2) * z))
    if fid == "CL3":
        return dict(rho=z, drho=1.0 + 0 * z, Fsq=k * _exp(-3 * z))
    if fid == "CL4":
        tz = _tan(z)
        return dict(rho=-tz, drho=-(1 + tz * tz), Fsq=k * _exp(-3 * b * z) / _cos(z))
    if fid == "GEN_CL":
        return dict(rho=polyval(spec.rho, z), drho=polyval(polyder(spec.rho), z), Fsq=1.0 + 0 * z)
    raise AssertionError(fid)


def _base_surface(spec: FamilySpec, u1, u2) -> dict:
    """2D Kähler base: metric ``h``, area coefficient ``Omega`` and ``tau``."""
    G = polyval(spec.gfun, u2)
    fid, b = spec.id, spec.beta
    if fid == "D1" or (fid == "D2" and b == -2):
        return dict(h=((G, 0.0), (0.0, 1 / G)), Omega=1.0 + 0 * u1, tau=(0.0 * u1, u1), G=G)
    if fid in ("D2", "D3"):
        k = 3.0 if fid == "D3" else b + 2
        e = _exp(-k * u1) * G
        return dict(h=((e, 0.0), (0.0, e)), Omega=e, tau=(0.0 * u1, e * (-1 / k)), G=G)
    if fid == "GEN_D":
        return dict(h=((G, 0.0), (0.0, G)), Omega=G, tau=(0.0 * u1, u1 * G), G=G)
    raise AssertionError(fid)


def _degenerate_profile(spec: FamilySpec, x) -> dict:
    fid, b, c1 = spec.id, spec.beta, spec.c1
    if fid == "D1":
        return dict(rho=1 / x, drho=-1 / (x * x), Fsq=c1**2 / (x * _sign_value(x)), c0=0.0)
    if fid == "D2":
        rho = c1 * _exp((b - 1) * x)
        return dict(rho=rho, drho=(b - 1) * rho, Fsq=spec.d1**2 * _exp(-(b + 2) * x), c0=0.0)
    if fid == "D3":
        return dict(rho=1 / x, drho=-1 / (x * x),
                    Fsq=c1**2 * _exp(-3 * x) / (x * _sign_value(x)), c0=0.0)
    if fid == "GEN_D":
        if spec.f:
            # rho itself is the first coordinate; F^2 = 1/f(rho)
            return dict(rho=x, drho=1.0 + 0 * x, Fsq=1 / polyval(spec.f, x), c0=spec.c0)
        return dict(rho=polyval(spec.rho, x), drho=polyval(polyder(spec.rho), x),
                    Fsq=1.0 + 0 * x, c0=spec.c0)
    raise AssertionError(fid)


def vector_field(spec: FamilySpec, p):
    """Components of the c-projective field; ``p`` may hold jets or floats.

    Returns ``None`` for the ``GEN_*`` forms, which carry no distinguished field.
    """
    a0, a1, a2, a3 = p
    one = 1.0 + 0 * a0
    b = spec.beta
    fid = spec.id
    if spec.kind in ("L", "CL") and not fid.startswith("GEN"):
        vy = one if spec.kind == "L" else 0 * a0
        s, t = a2, a3
        key = fid[-1]
        if key == "1":
            return [one, vy, -t, 0 * t]
        if key == "2":
            return [one, vy, -(b + 2) * s, -(2 * b + 1) * t]
        if key == "3":
            return [one, vy, -(3 * s + t), -3 * t]
        return [one, vy, -(3 * b * s - t), -(s + 3 * b * t)]
    t, u2 = a1, a3
    if fid == "D1" or (fid == "D2" and b == -2):
        return [one, u2 + 0 * a0, one, 0 * a0]
    if fid == "D2":
        return [one, -(b + 2) * t, one, 0 * a0]
    if fid == "D3":
        return [one, -3 * t, one, 0 * a0]
    return None


# -- structure bundle ----------------------------------------------------------

@dataclass
class Structure:
    """Jets of ``g``, ``omega``, ``J``, ``A`` and ``v`` at a chart point."""

    spec: FamilySpec
    point: np.ndarray
    order: int
    g: Jet
    omega: Jet
    J: Jet
    A: Jet
    v: Optional[Jet]
    rho: Jet
    sigma: Jet
    data: dict = field(default_factory=dict)


def _covector(items, order, dtype=float) -> Jet:
    return jets.stack([x if isinstance(x, Jet) else Jet.constant(np.asarray(x, dtype=dtype), order)
                       for x in items], order)


def _sym(a: Jet, b: Jet) -> Jet:
    ab = contract("i,j->ij", a, b)
    return (ab + ab.transpose()) * 0.5


def _wedge(a: Jet, b: Jet) -> Jet:
    ab = contract("i,j->ij", a, b)
    return ab - ab.transpose()


def _build_liouville(spec, X, order):
    x, y, s, t = X
    d = _liouville_profile(spec, x, y)
    rho, sig, drho, dsig = d["rho"], d["sigma"], d["drho"], d["dsigma"]
    eps = spec.eps
    diff = rho - sig
    P = drho * drho / d["Fsq"]
    Q = dsig * dsig / d["Gsq"] * eps
    g = metric_from_components({
        (0, 0): diff * d["Fsq"], (1, 1): diff * d["Gsq"] * eps,
        (2, 2): (P + Q) / diff, (2, 3): (P * sig + Q * rho) / diff,
        (3, 3): (P * sig * sig + Q * rho * rho) / diff}, order)
    omega = form_from_components({(0, 2): drho, (0, 3): drho * sig, (1, 2): dsig, (1, 3): dsig * rho}, order)
    A = jets.zeros((4, 4), order)
    for (i, j), val in {(0, 0): rho, (1, 1): sig, (2, 2): rho + sig, (2, 3): rho * sig}.items():
        A.coeffs[i, j] = val.coeffs
    A.coeffs[3, 2, 0] = -1.0
    return g, omega, A, rho, sig, d


def _check_imag(name: str, T: Jet) -> Jet:
    scale = max(1.0, float(np.max(np.abs(T.coeffs.real))))
    res = float(np.max(np.abs(T.coeffs.imag)))
    if res > IMAG_TOL * scale:
        raise ValueError(f"imaginary residue {res:.3e} in {name}: conjugate pairing is inconsistent")
    return T.real


def _build_complex(spec, X, order):
    x, y, s, t = X
    z = jets.complex_coordinate(x, y)
    d = _complex_profile(spec, z)
    rho, drho, Fsq = d["rho"], d["drho"], d["Fsq"]
    rhob, drhob, Fsqb = rho.conj(), drho.conj(), Fsq.conj()
    dz = _covector([1, 1j, 0, 0], order, complex)
    dzb = _covector([1, -1j, 0, 0], order, complex)
    e_rho = _covector([0, 0, 1, rho], order, complex)
    e_rhob = _covector([0, 0, 1, rhob], order, complex)
    P = drhob * drhob / Fsqb
    Q = drho * drho / Fsq
    g = (_sym(dz, dz) * Fsq - _sym(dzb, dzb) * Fsqb) * ((rhob - rho) * 0.25) \
        + (_sym(e_rho, e_rho) * P - _sym(e_rhob, e_rhob) * Q) * (4 / (rho - rhob))
    omega = _wedge(dz, e_rhob) * drho + _wedge(dzb, e_rho) * drhob
    A = jets.zeros((4, 4), order, complex)
    dz_vec = _covector([0.5, -0.5j, 0, 0], order, complex)
    dzb_vec = _covector([0.5, 0.5j, 0, 0], order, complex)
    A = contract("i,j->ij", dz_vec, dz) * rho + contract("i,j->ij", dzb_vec, dzb) * rhob
    A.coeffs[2, 2] += (rho + rhob).coeffs
    A.coeffs[2, 3] += (rho * rhob).coeffs
    A.coeffs[3, 2, 0] += -1.0
    g, omega, A = _check_imag("g", g), _check_imag("omega", omega), _check_imag("A", A)
    return g, omega, A, rho, rhob, d


def _build_degenerate(spec, X, order):
    x, t, u1, u2 = X
    d = _degenerate_profile(spec, x)
    base = _base_surface(spec, u1, u2)
    d.update(base)
    rho, drho, Fsq, c = d["rho"], d["drho"], d["Fsq"], d["c0"]
    theta = _covector([0.0, 1.0, -base["tau"][0], -base["tau"][1]], order)
    e0 = _covector([1.0, 0.0, 0.0, 0.0], order)
    H = jets.zeros((4, 4), order)
    (h11, h12), (h21, h22) = base["h"]
    for (i, j), val in {(2, 2): h11, (2, 3): h12, (3, 2): h21, (3, 3): h22}.items():
        H.coeffs[i, j] = (val if isinstance(val, Jet) else Jet.constant(val, order)).coeffs
    Om = jets.zeros((4, 4), order)
    Om.coeffs[2, 3] = base["Omega"].coeffs
    Om.coeffs[3, 2] = -base["Omega"].coeffs
    rc = rho - c
    th2 = drho * drho / Fsq / rc
    tt = contract("i,j->ij", theta, theta)
    xx = contract("i,j->ij", e0, e0)
    g = H * (c - rho) + xx * (rc * Fsq) + tt * th2
    omega = Om * (c - rho) + _wedge(e0, theta) * drho
    gA = H * ((c - rho) * c) + tt * (th2 * rho) + xx * (rho * rc * Fsq)
    A = contract("ik,kj->ij", jets.inv(g), gA)
    sigma = Jet.constant(float(c), order)
    return g, omega, A, rho, sigma, d


def domain_violation(spec: FamilySpec, p, margin: float = 0.0) -> Optional[str]:
    """Reason why ``p`` is outside the domain (``None`` if it is inside).

    ``margin`` widens the excluded singular loci, as used for sampling.
    """
    p = np.asarray(p, dtype=float)
    if p.shape != (4,) or not np.all(np.isfinite(p)):
        return "chart point must have four finite coordinates"
    tiny = max(margin, 1e-12)
    try:
        with np.errstate(all="raise"):
            if spec.kind == "L":
                if spec.id == "L4" and (abs(np.cos(p[0])) <= tiny or abs(np.cos(p[1])) <= tiny):
                    return "cos(x) or cos(y) vanishes"
                d = _liouville_profile(spec, p[0], p[1])
                if abs(d["rho"] - d["sigma"]) <= tiny:
                    return "rho(x) = sigma(y)"
                if abs(d["drho"]) <= 1e-12 or abs(d["dsigma"]) <= 1e-12:
                    return "rho' or sigma' vanishes"
            elif spec.kind == "CL":
                z = complex(p[0], p[1])
                if spec.id == "CL4" and abs(np.cos(z)) <= tiny:
                    return "cos(z) vanishes"
                d = _complex_profile(spec, z)
                if abs(np.imag(d["rho"])) <= tiny / 2:
                    return "Im rho(z) vanishes"
                if abs(d["drho"]) <= 1e-12:
                    return "rho'(z) vanishes"
            else:
                if spec.id in ("D1", "D3") and abs(p[0]) <= tiny:
                    return "x vanishes"
                d = _degenerate_profile(spec, p[0])
                if abs(d["rho"] - d["c0"]) <= tiny:
                    return "rho(x) equals the constant eigenvalue"
                if abs(d["drho"]) <= 1e-12:
                    return "rho' vanishes"
                G = polyval(spec.gfun, p[3])
                if abs(G) <= tiny:
                    return "G(u2) vanishes"
                if spec.id == "GEN_D" and spec.f and abs(polyval(spec.f, p[0])) <= tiny:
                    return "f(rho) vanishes"
    except (FloatingPointError, ZeroDivisionError, OverflowError):
        return "profile functions are singular"
    return None


def locus_signs(spec: FamilySpec, p) -> np.ndarray:
    """Signs of the real functions whose zero sets bound the domain.

    A flip between two in-domain points means the segment joining them
    crossed a singular locus; complex conditions contribute nothing.
    """
    p = np.asarray(p, dtype=float)
    vals = []
    with np.errstate(all="ignore"):
        if spec.kind == "L":
            d = _liouville_profile(spec, p[0], p[1])
            vals = [d["rho"] - d["sigma"], d["drho"], d["dsigma"]]
            if spec.id == "L4":
                vals += [np.cos(p[0]), np.cos(p[1])]
        elif spec.kind == "CL":
            vals = [np.imag(_complex_profile(spec, complex(p[0], p[1]))["rho"])]
        else:
            if spec.id in ("D1", "D3"):
                vals.append(p[0])
            d = _degenerate_profile(spec, p[0])
            vals += [d["rho"] - d["c0"], d["drho"], polyval(spec.gfun, p[3])]
            if spec.id == "GEN_D" and spec.f:
                vals.append(polyval(spec.f, p[0]))
    return np.sign(np.real(np.array(vals, dtype=complex)))


def check_domain(spec: FamilySpec, p) -> None:
    why = domain_violation(spec, p)
    if why is not None:
        raise DomainError(f"{spec.id}: point {tuple(np.asarray(p, float))} outside domain: {why}")


def eval_structure(spec: FamilySpec, p, order: int = 2) -> Structure:
    """Evaluate ``(g, omega, J, A, v)`` of a family at chart point ``p``."""
    check_domain(spec, p)
    X = jets.seed_coordinates(p, order)
    if spec.kind == "L":
        g, omega, A, rho, sigma, d = _build_liouville(spec, X, order)
    elif spec.kind == "CL":
        g, omega, A, rho, sigma, d = _build_complex(spec, X, order)
    else:
        g, omega, A, rho, sigma, d = _build_degenerate(spec, X, order)
    if abs(np.linalg.det(g.value)) < 1e-10:
        raise DomainError(f"{spec.id}: metric degenerate at {tuple(p)}")
    J = complex_structure_from(g, omega, tol=None)
    v = vector_field(spec, X)
    return Structure(spec, np.asarray(p, float), order, g, omega, J, A,
                     None if v is None else jets.stack(v, order), rho, sigma, d)


# -- companion metrics -----------------------------------------------------------

def _collision(name: str, diff) -> None:
    v = diff.value if isinstance(diff, Jet) else diff
    if np.any(np.abs(v) < COLLISION_TOL):
        raise DomainError(f"companion parameter c collides with eigenvalue {name} at this point")


def eval_ghat(spec: FamilySpec, p, order: int = 2, c: float | None = None, C: float | None = None,
              verbatim: bool = False) -> Jet:
    """Companion metric ``ĝ(c, C)`` in the chart of the family.

    For the complex Liouville forms the ``ds``/``dt`` bracket carries the
    factor ``-4`` that matches the ``4/(rho - rhobar)`` weight of ``g``;
    ``verbatim=True`` drops it, which yields a metric that is *not*
    c-projectively equivalent to ``g`` (kept for the regression test).
    """
    c = spec.c if c is None else c
    C = spec.C if C is None else C
    if C == 0:
        raise DomainError("C must be nonzero")
    check_domain(spec, p)
    X = jets.seed_coordinates(p, order)
    if spec.kind == "L":
        x, y, s, t = X
        d = _liouville_profile(spec, x, y)
        rho, sig, eps = d["rho"], d["sigma"], spec.eps
        _collision("rho", rho - c)
        _collision("sigma", sig - c)
        P = d["drho"] * d["drho"] / d["Fsq"]
        Q = d["dsigma"] * d["dsigma"] / d["Gsq"]
        rc, sc, diff = rho - c, sig - c, rho - sig
        pref = C / (rc * rc * sc * sc * diff)
        gh = metric_from_components({
            (0, 0): pref * diff * diff * sc * d["Fsq"],
            (1, 1): pref * diff * diff * rc * d["Gsq"] * eps,
            (2, 2): pref * (P * sc + rc * Q * eps),
            (3, 3): pref * (P * sig * sig * sc + rho * rho * rc * Q * eps),
            (2, 3): pref * (P * sig * sc + rho * rc * Q * eps)}, order)
    elif spec.kind == "CL":
        x, y, s, t = X
        z = jets.complex_coordinate(x, y)
        d = _complex_profile(spec, z)
        rho, drho, Fsq = d["rho"], d["drho"], d["Fsq"]
        rhob, Fsqb = rho.conj(), Fsq.conj()
        _collision("rho", rho - c)
        P = drho.conj() * drho.conj() / Fsqb
        Q = drho * drho / Fsq
        rc, rbc = rho - c, rhob - c
        pref = C / (rc * rc * rbc * rbc * (rhob - rho))
        dz = _covector([1, 1j, 0, 0], order, complex)
        dzb = _covector([1, -1j, 0, 0], order, complex)
        ds = _covector([0, 0, 1, 0], order, complex)
        dt = _covector([0, 0, 0, 1], order, complex)
        zz = (_sym(dz, dz) * (Fsq / rc) - _sym(dzb, dzb) * (Fsqb / rbc)) \
            * ((rhob - rho) * (rhob - rho) * rc * rbc * 0.25)
        w = 1.0 if verbatim else -4.0
        st_block = (_sym(ds, ds) * (P * rc - Q * rbc)
                    + _sym(dt, dt) * (P * rho * rho * rc - Q * rhob * rhob * rbc)
                    + _sym(ds, dt) * ((P * rho * rc - Q * rhob * rbc) * 2)) * w
        gh = (zz + st_block) * pref
        gh = _check_imag("companion metric", gh)
    else:
        if spec.id == "GEN_D" and spec.c0 != 0:
            st = eval_structure(spec, p, order)
            return companion_metric(st.g, st.A, c, C)
        if c == 0:
            raise DomainError("c must be nonzero for the degenerate companion metric")
        x, t, u1, u2 = X
        d = _degenerate_profile(spec, x)
        base = _base_surface(spec, u1, u2)
        rho = d["rho"]
        _collision("rho", rho - c)
        rc = rho - c
        theta = _covector([0.0, 1.0, -base["tau"][0], -base["tau"][1]], order)
        H = jets.zeros((4, 4), order)
        (h11, h12), (h21, h22) = base["h"]
        for (i, j), val in {(2, 2): h11, (2, 3): h12, (3, 2): h21, (3, 3): h22}.items():
            H.coeffs[i, j] = (val if isinstance(val, Jet) else Jet.constant(val, order)).coeffs
        xx = jets.zeros((4, 4), order)
        xx.coeffs[0, 0, 0] = 1.0
        th2 = d["drho"] * d["drho"] / d["Fsq"]
        gh = (H * (rho / c) + xx * (rho * d["Fsq"] / rc)
              + contract("i,j->ij", theta, theta) * (th2 / (rho * rc))) * (C / (c * rc))
    G = np.asarray(gh.value)
    # scale-free: compare with the Hadamard bound
    if abs(np.linalg.det(G)) <= 1e-12 * np.prod(np.linalg.norm(G, axis=1)):
        raise DomainError("companion metric is singular at this point")
    return gh


def mu_jets(A: Jet) -> tuple[Jet, Jet]:
    """``mu1 = tr A / 2`` and ``mu2 = (mu1^2 - tr(A^2) / 2) / 2`` as jets.

    For ``A`` with eigenvalues ``rho, rho, sigma, sigma`` these are
    ``rho + sigma`` and ``rho * sigma``.
    """
    mu1 = A.trace() * 0.5
    A2 = contract("ij,jk->ik", A, A)
    mu2 = (mu1 * mu1 - A2.trace() * 0.5) * 0.5
    return mu1, mu2


def companion_metric(g: Jet, A: Jet, c: float, C: float) -> Jet:
    """``C g (A - c)^{-1} / (c^2 - mu1 c + mu2)``, built from ``(g, A)`` directly.

    This agrees with the Liouville formulas and equals minus the degenerate
    formula (whose normalization flips the overall sign).
    """
    mu1, mu2 = mu_jets(A)
    q = mu2 - mu1 * c + c * c
    _collision("q", q)
    shifted = A - np.eye(4) * c
    return _symmetrize(contract("ik,kj->ij", g, jets.inv(shifted))) * (q.reciprocal() * C)


def _symmetrize(T: Jet) -> Jet:
    return (T + T.transpose()) * 0.5


# -- eigenvalue structure at a point ----------------------------------------------

@dataclass(frozen=True)
class RealSplit:
    rho: float
    sigma: float


@dataclass(frozen=True)
class ComplexPair:
    rho: complex
    rhobar: complex


@dataclass(frozen=True)
class SingleEigenvalue:
    rho: float


TIE_TOL = 1e-10
SQUARE_TOL = 1e-8


def symmetric_functions(A_values, check: bool = True) -> tuple[float, float]:
    """``(mu1, mu2)`` with ``sqrt(det(A - t Id)) = t^2 - mu1 t + mu2``."""
    A = np.asarray(A_values, dtype=float)
    mu1 = np.trace(A) / 2
    mu2 = (mu1 * mu1 - np.trace(A @ A) / 2) / 2
    if check:
        square = np.polymul([1, -mu1, mu2], [1, -mu1, mu2])
        charpoly = np.poly(A)
        scale = max(1.0, float(np.max(np.abs(square))))
        if np.max(np.abs(charpoly - square)) > SQUARE_TOL * scale:
            raise ValueError("characteristic polynomial is not a perfect square")
    return float(mu1), float(mu2)


def classify_point(A_values) -> Union[RealSplit, ComplexPair, SingleEigenvalue]:
    mu1, mu2 = symmetric_functions(A_values, check=False)
    f = mu1 * mu1 - 4 * mu2
    if abs(f) <= TIE_TOL:
        return SingleEigenvalue(mu1 / 2)
    if f > 0:
        r = np.sqrt(f)
        return RealSplit((mu1 - r) / 2, (mu1 + r) / 2)
    r = np.sqrt(-f)
    return ComplexPair(complex(mu1 / 2, r / 2), complex(mu1 / 2, -r / 2))


# -- catalog description ------------------------------------------------------------

CATALOG = {
    "L1": dict(case="Liouville L1", params=("c1", "c2", "eps"),
               functions="rho(x) = x, sigma(y) = y, F = c1, G = c2",
               v="v = d_x + d_y - t d_s"),
    "L2": dict(case="Liouville L2", params=("beta", "c1", "c2", "d1", "d2", "eps"),
               functions="rho(x) = c1 exp((beta-1)x), sigma(y) = c2 exp((beta-1)y), "
                         "F = d1 exp(-(beta+2)x/2), G = d2 exp(-(beta+2)y/2), beta != 1",
               v="v = d_x + d_y - (beta+2)s d_s - (2beta+1)t d_t"),
    "L3": dict(case="Liouville L3", params=("c1", "c2", "eps"),
               functions="rho(x) = x, sigma(y) = y, F = c1 exp(-3x/2), G = c2 exp(-3y/2)",
               v="v = d_x + d_y - (3s+t) d_s - 3t d_t"),
    "L4": dict(case="Liouville L4", params=("beta", "c1", "c2", "eps"),
               functions="rho(x) = -tan(x), sigma(y) = -tan(y), "
                         "F = c1 exp(-3beta x/2)/sqrt|cos x|, G = c2 exp(-3beta y/2)/sqrt|cos y|",
               v="v = d_x + d_y - (3beta s - t) d_s - (s + 3beta t) d_t"),
    "CL1": dict(case="complex Liouville CL1", params=("c1", "c2"),
                functions="rho(z) = z, F = c1 + i c2",
                v="v = d_z + d_zbar - t d_s"),
    "CL2": dict(case="complex Liouville CL2", params=("beta", "c1", "c2"),
                functions="rho(z) = exp((beta-1)z), F = (c1 + i c2) exp(-(beta+2)z/2), beta != 1",
                v="v = d_z + d_zbar - (beta+2)s d_s - (2beta+1)t d_t"),
    "CL3": dict(case="complex Liouville CL3", params=("c1", "c2"),
                functions="rho(z) = z, F = (c1 + i c2) exp(-3z/2)",
                v="v = d_z + d_zbar - (3s+t) d_s - 3t d_t"),
    "CL4": dict(case="complex Liouville CL4", params=("beta", "c1", "c2"),
                functions="rho(z) = -tan(z), F = (c1 + i c2) exp(-3beta z/2)/sqrt(cos z)",
                v="v = d_z + d_zbar - (3beta s - t) d_s - (s + 3beta t) d_t"),
    "D1": dict(case="degenerate D1", params=("c1", "gfun"),
               functions="rho(x) = 1/x, F = c1/sqrt|x|, tau = u1 du2, h = G du1^2 + du2^2/G",
               v="v = d_x + u2 d_t + d_u1"),
    "D2": dict(case="degenerate D2", params=("beta", "c1", "d1", "gfun"),
               functions="rho(x) = c1 exp((beta-1)x), F = d1 exp(-(beta+2)x/2), beta != 1; "
                         "beta = -2: tau = u1 du2, h = G du1^2 + du2^2/G; "
                         "otherwise tau = -exp(-(beta+2)u1) G du2/(beta+2), h = exp(-(beta+2)u1) G (du1^2 + du2^2)",
               v="beta = -2: v = d_x + u2 d_t + d_u1; otherwise v = d_x - (beta+2)t d_t + d_u1"),
    "D3": dict(case="degenerate D3", params=("c1", "gfun"),
               functions="rho(x) = 1/x, F = c1 exp(-3x/2)/sqrt|x|, "
                         "tau = -exp(-3u1) G du2/3, h = exp(-3u1) G (du1^2 + du2^2)",
               v="v = d_x - 3t d_t + d_u1"),
    "GEN_L": dict(case="general Liouville form", params=("rho", "sigma", "eps"),
                  functions="rho(x), sigma(y) polynomials, F = G = 1", v="none"),
    "GEN_CL": dict(case="general complex Liouville form", params=("rho",),
                   functions="rho(z) complex polynomial, F = 1", v="none"),
    "GEN_D": dict(case="general degenerate form", params=("f", "rho", "c0", "gfun"),
                  functions="f(rho) polynomial in the rho chart (or rho(x) polynomial), "
                            "constant eigenvalue c0, h = G (du1^2 + du2^2), tau = u1 G du2",
                  v="none"),
}

DOMAINS = {
    "L": "rho(x) != sigma(y), rho' != 0, sigma' != 0",
    "CL": "Im rho(z) != 0, rho'(z) != 0",
    "D": "rho(x) != constant eigenvalue, rho' != 0, G(u2) != 0",
}

G_PRESETS = {
    "one": lambda d1=1.0, d2=0.0, d3=1.0: (1.0,),
    "default": lambda d1=1.0, d2=0.0, d3=1.0: (2.0, 0.0, 1.0),
    "constant_curvature": lambda d1=1.0, d2=1.0, d3=1.0: (d3, d2, 9.0 / d1**2),
}


def catalog_entry(fid: str) -> dict:
    spec = FamilySpec(fid)
    info = dict(CATALOG[fid])
    info["id"] = fid
    info["chart"] = list(spec.chart)
    info["domain"] = DOMAINS[spec.kind]
    info["defaults"] = {k: _jsonable(getattr(spec, k)) for k in info["params"]}
    info["box"] = [list(iv) for iv in spec.sampling_box]
    lc = spec.lie_constants
    info["lie_constants"] = None if lc is None else str(lc)
    info["params"] = list(info["params"])
    return info


def _jsonable(v: Any):
    if isinstance(v, tuple):
        return [_jsonable(x) for x in v]
    if isinstance(v, complex):
        return [v.real, v.imag]
    return v
