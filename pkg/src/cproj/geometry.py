"""Pointwise tensor calculus on a four-dimensional chart.

All tensors are :class:`~cproj.jets.Jet` objects with coordinate indices in
the leading axes.  Index placement follows the usual convention: ``g[i, j]``
is ``g_ij``, an endomorphism ``A[i, j]`` is ``A^i_j``, ``Gamma[i, j, k]`` is
``Gamma^i_jk`` and derivative indices are appended last.

The complex structure is tied to the Kähler form by ``omega(X, Y) = g(JX, Y)``,
so ``omega = J^T g`` as matrices and ``J = -g^{-1} omega``.  With this choice
the Hamiltonian field ``X_H = J grad H`` satisfies ``i_{X_H} omega = -dH``.
"""

from __future__ import annotations

from typing import NamedTuple, Sequence

import numpy as np

from . import jets
from .jets import Jet, contract

DEGENERACY_THRESHOLD = 1e-10


class Curvature(NamedTuple):
    riemann: np.ndarray
    ricci: np.ndarray
    scalar: float


def as_vector(v) -> Jet:
    """Accept a length-4 jet or a sequence of four scalar jets."""
    if isinstance(v, Jet):
        return v
    return jets.stack(list(v))


def _common(*items: Jet) -> list[Jet]:
    order = min(t.order for t in items)
    return [t.truncate(order) for t in items]


def check_metric(g: Jet, threshold: float = DEGENERACY_THRESHOLD) -> None:
    g0 = g.value
    if g.shape != (4, 4):
        raise ValueError("metric must be a 4x4 jet")
    if np.max(np.abs(g.coeffs - g.transpose().coeffs)) > 0:
        raise ValueError("metric is not symmetric")
    if abs(np.linalg.det(g0)) < threshold:
        raise np.linalg.LinAlgError("singular metric")


def signature(g) -> tuple[int, int]:
    ev = np.linalg.eigvalsh(g.value if isinstance(g, Jet) else np.asarray(g))
    return int(np.sum(ev > 0)), int(np.sum(ev < 0))


def christoffel(g: Jet, ginv: Jet | None = None, threshold: float = DEGENERACY_THRESHOLD) -> Jet:
    """Levi-Civita symbols ``Gamma^i_jk``; one order below ``g``."""
    if g.order < 1:
        raise ValueError("Christoffel symbols need a metric jet of order >= 1")
    check_metric(g, threshold)
    if ginv is None:
        ginv = jets.inv(g)
    dg = g.grad()  # dg[i, j, k] = d_k g_ij
    # B[l, j, k] = d_j g_lk + d_k g_jl - d_l g_jk
    B = dg.permute("lkj->ljk") + dg.permute("jlk->ljk") - dg.permute("jkl->ljk")
    return contract("il,ljk->ijk", ginv.truncate(g.order - 1), B) * 0.5


def curvature(g: Jet, threshold: float = DEGENERACY_THRESHOLD) -> tuple[Jet, Jet, Jet]:
    """Riemann ``R^i_jkl``, Ricci ``R_jl = R^i_jil`` and scalar curvature jets.

    ``threshold`` is the smallest admissible ``|det g|``; callers that have
    already checked nondegeneracy in a scale-free way may pass 0.
    """
    if g.order < 2:
        raise ValueError("curvature needs a metric jet of order >= 2")
    ginv = jets.inv(g)
    G = christoffel(g, ginv, threshold)
    dG = G.grad()  # dG[i, j, k, l] = d_l Gamma^i_jk
    G1 = G.truncate(g.order - 2)
    # R^i_jkl = d_k G^i_lj - d_l G^i_kj + G^i_km G^m_lj - G^i_lm G^m_kj
    quad = contract("ikm,mlj->ijkl", G1, G1)
    R = dG.permute("iljk->ijkl") - dG.permute("ikjl->ijkl") + quad - quad.permute("ijlk->ijkl")
    ric = Jet(np.einsum("ijil...->jl...", R.coeffs), R.order)
    scal = contract("jl,jl->", ginv.truncate(R.order), ric)
    return R, ric, scal


def riemann_ricci_scal(g: Jet) -> Curvature:
    R, ric, scal = curvature(g)
    return Curvature(R.value, ric.value, float(np.real(scal.value)))


def lower_riemann(R: np.ndarray, g: np.ndarray) -> np.ndarray:
    """``R_ijkl = g_im R^m_jkl`` at the value level."""
    return np.einsum("im,mjkl->ijkl", g, R)


def covariant_derivative_endo(A: Jet, Gamma: Jet) -> Jet:
    """``(nabla A)^i_jk = d_k A^i_j + Gamma^i_kl A^l_j - Gamma^l_kj A^i_l``."""
    if A.order < 1:
        raise ValueError("covariant derivative needs an endomorphism jet of order >= 1")
    dA = A.grad()
    dA, Gm, A1 = _common(dA, Gamma, A.truncate(A.order - 1))
    return dA + contract("ikl,lj->ijk", Gm, A1) - contract("lkj,il->ijk", Gm, A1)


def covariant_derivative_metric(g: Jet, Gamma: Jet) -> Jet:
    """``(nabla g)_ijk = d_k g_ij - Gamma^l_ki g_lj - Gamma^l_kj g_il``."""
    dg = g.grad()
    dg, Gm, g1 = _common(dg, Gamma, g.truncate(g.order - 1))
    return dg - contract("lki,lj->ijk", Gm, g1) - contract("lkj,il->ijk", Gm, g1)


def lie_derivative(v, T: Jet, kind: str | None = None) -> Jet:
    """Lie derivative of a (0,2) tensor (``kind='metric'``) or (1,1) tensor.

    For a 2-form use ``kind='metric'`` as well; the formula only depends on
    the index type.  ``kind`` defaults to ``'endo'`` for non-symmetric input.
    """
    v = as_vector(v)
    if v.order < 1 or T.order < 1:
        raise ValueError("Lie derivative needs jets of order >= 1")
    if kind is None:
        kind = "metric" if np.array_equal(T.coeffs, T.transpose().coeffs) else "endo"
    dv = v.grad()  # dv[k, i] = d_i v^k
    dT = T.grad()
    order = min(v.order, T.order) - 1
    v0, T0, dv, dT = (x.truncate(order) for x in (v, T, dv, dT))
    trans = contract("k,ijk->ij", v0, dT)
    if kind == "metric":
        return trans + contract("kj,ki->ij", T0, dv) + contract("ik,kj->ij", T0, dv)
    if kind == "endo":
        return trans - contract("kj,ik->ij", T0, dv) + contract("ik,kj->ij", T0, dv)
    raise ValueError(f"unknown tensor kind {kind!r}")


def exterior_derivative(omega: Jet) -> Jet:
    """``(d omega)_ijk = d_i omega_jk + d_j omega_ki + d_k omega_ij``."""
    if omega.order < 1:
        raise ValueError("exterior derivative needs a 2-form jet of order >= 1")
    dw = omega.grad()  # dw[j, k, i] = d_i omega_jk
    return dw.permute("jki->ijk") + dw.permute("kij->ijk") + dw


def complex_structure_from(g: Jet, omega: Jet, tol: float | None = 1e-9) -> Jet:
    """Recover ``J`` from ``omega(X, Y) = g(JX, Y)``.

    Raises ``ValueError`` if ``J^2 + Id`` exceeds ``tol`` (skip with ``None``).
    """
    check_metric(g)
    J = contract("ik,kj->ij", jets.inv(g), -omega)
    if tol is not None:
        res = np.max(np.abs(J.value @ J.value + np.eye(4)))
        if res > tol:
            raise ValueError(f"(g, omega) do not define a complex structure: |J^2 + Id| = {res:.3e}")
    return J


def gradient(f: Jet, g: Jet, ginv: Jet | None = None) -> Jet:
    """``grad_g f = g^{-1} df`` (one order below ``f``)."""
    if ginv is None:
        ginv = jets.inv(g)
    df = f.grad()
    ginv, df = _common(ginv, df)
    return contract("ij,j->i", ginv, df)


def hamiltonian_field(H: Jet, g: Jet, J: Jet, ginv: Jet | None = None) -> Jet:
    """``X_H = J grad_g H``."""
    gr = gradient(H, g, ginv)
    J1, gr = _common(J, gr)
    return contract("ij,j->i", J1, gr)


def bracket(X, Y) -> Jet:
    """Lie bracket ``[X, Y]^i = X^j d_j Y^i - Y^j d_j X^i``."""
    X, Y = as_vector(X), as_vector(Y)
    dX, dY = X.grad(), Y.grad()
    order = min(X.order, Y.order) - 1
    X0, Y0, dX, dY = (t.truncate(order) for t in (X, Y, dX, dY))
    return contract("j,ij->i", X0, dY) - contract("j,ij->i", Y0, dX)


def killing_residual(v, g: Jet) -> float:
    return float(np.max(np.abs(lie_derivative(v, g, "metric").value)))


def hamiltonian_residual(K, H: Jet, omega) -> float:
    """``max_j |omega_ij K^i + d_j H|``."""
    Kv = K.value if isinstance(K, Jet) else (as_vector(K).value if not isinstance(K, np.ndarray) else K)
    w = omega.value if isinstance(omega, Jet) else np.asarray(omega)
    dH = H.gradient() if H.order >= 1 else np.zeros(4)
    return float(np.max(np.abs(np.einsum("ij,i->j", w, Kv) + dH)))


def structure_residuals(g: Jet, omega: Jet, J: Jet) -> dict[str, float]:
    """Value-level residuals of the Kähler conditions."""
    J0, g0 = J.value, g.value
    Gamma = christoffel(g)
    return {
        "J2": float(np.max(np.abs(J0 @ J0 + np.eye(4)))),
        "hermitian": float(np.max(np.abs(J0.T @ g0 @ J0 - g0))),
        "domega": float(np.max(np.abs(exterior_derivative(omega).value))),
        "nablaJ": float(np.max(np.abs(covariant_derivative_endo(J, Gamma).value))),
        "nablag": float(np.max(np.abs(covariant_derivative_metric(g, Gamma).value))),
    }


def metric_from_components(entries: dict, order: int, dtype=float) -> Jet:
    """Symmetric 4x4 jet from ``{(i, j): jet}`` with ``i <= j``."""
    g = jets.zeros((4, 4), order, dtype)
    for (i, j), val in entries.items():
        c = val.coeffs if isinstance(val, Jet) else Jet.constant(val, order).coeffs
        g.coeffs[i, j] = c
        g.coeffs[j, i] = c
    return g


def form_from_components(entries: dict, order: int, dtype=float) -> Jet:
    """Antisymmetric 4x4 jet from ``{(i, j): jet}``."""
    w = jets.zeros((4, 4), order, dtype)
    for (i, j), val in entries.items():
        c = val.coeffs if isinstance(val, Jet) else Jet.constant(val, order).coeffs
        w.coeffs[i, j] = c
        w.coeffs[j, i] = -c
    return w


def sym_product(a: Sequence, b: Sequence, order: int) -> Jet:
    """Symmetrized tensor product ``(a ⊗ b + b ⊗ a) / 2`` of two covector jets."""
    a, b = as_covector(a, order), as_covector(b, order)
    ab = contract("i,j->ij", a, b)
    return (ab + ab.transpose()) * 0.5


def wedge(a: Sequence, b: Sequence, order: int) -> Jet:
    """``a ∧ b = a ⊗ b - b ⊗ a``."""
    a, b = as_covector(a, order), as_covector(b, order)
    ab = contract("i,j->ij", a, b)
    return ab - ab.transpose()


def as_covector(a, order: int) -> Jet:
    if isinstance(a, Jet):
        return a
    return jets.stack([x if isinstance(x, Jet) else Jet.constant(x, order) for x in a], order)
