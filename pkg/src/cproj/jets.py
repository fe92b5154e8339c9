"""Truncated multivariate Taylor jets in four real variables.

A :class:`Jet` stores, for every tensor component, the Taylor coefficients
``f^(alpha)(p) / alpha!`` for all multi-indices ``|alpha| <= order`` in a
dense trailing axis.  Products are plain truncated polynomial convolutions,
carried out with precomputed index tables so that whole 4x4 (or 4x4x4)
tensors are processed in a single vectorized call.

Complex dtypes are supported throughout.  Holomorphic functions of
``z = x + i y`` are obtained by composing with the complex coordinate jet,
which performs the substitution ``dz = dx + i dy``.
"""

from __future__ import annotations

import functools
import itertools
import math
from typing import Sequence

import numpy as np

NVAR = 4
MAX_ORDER = 3


@functools.lru_cache(maxsize=None)
def multi_indices(order: int) -> tuple[tuple[int, ...], ...]:
    """All multi-indices of total degree <= order, graded then lexicographic."""
    out = []
    for deg in range(order + 1):
        for combo in itertools.combinations_with_replacement(range(NVAR), deg):
            alpha = [0] * NVAR
            for i in combo:
                alpha[i] += 1
            out.append(tuple(alpha))
    # combinations_with_replacement yields reverse-lex; sort within degree
    out.sort(key=lambda a: (sum(a), tuple(-x for x in a)))
    return tuple(out)


def n_coeffs(order: int) -> int:
    return math.comb(order + NVAR, NVAR)


@functools.lru_cache(maxsize=None)
def _position(order: int) -> dict:
    return {a: k for k, a in enumerate(multi_indices(order))}


@functools.lru_cache(maxsize=None)
def _mul_tables(order: int):
    idx = multi_indices(order)
    pos = _position(order)
    I, J, T = [], [], []
    for i, a in enumerate(idx):
        for j, b in enumerate(idx):
            c = tuple(x + y for x, y in zip(a, b))
            if sum(c) <= order:
                I.append(i)
                J.append(j)
                T.append(pos[c])
    S = np.zeros((len(I), len(idx)))
    S[np.arange(len(I)), T] = 1.0
    return np.array(I), np.array(J), S


@functools.lru_cache(maxsize=None)
def _deriv_tables(order: int):
    """For each variable: source positions and factors of the derivative jet."""
    lower = multi_indices(order - 1)
    pos = _position(order)
    tables = []
    for i in range(NVAR):
        src, fac = [], []
        for a in lower:
            b = list(a)
            b[i] += 1
            src.append(pos[tuple(b)])
            fac.append(a[i] + 1)
        tables.append((np.array(src), np.array(fac, dtype=float)))
    return tables


@functools.lru_cache(maxsize=None)
def _factorials(order: int) -> np.ndarray:
    return np.array([math.prod(math.factorial(x) for x in a) for a in multi_indices(order)], dtype=float)


def _check_order(order: int) -> None:
    if not isinstance(order, (int, np.integer)) or not 0 <= order <= MAX_ORDER:
        raise ValueError(f"jet order must be an integer in 0..{MAX_ORDER}, got {order!r}")


class Jet:
    """Tensor-valued truncated Taylor jet.

    Parameters
    ----------
    coeffs : ndarray, shape (*shape, K)
        Taylor coefficients, last axis indexed by :func:`multi_indices`.
    order : int
        Truncation order, ``K == n_coeffs(order)``.
    """

    __slots__ = ("coeffs", "order")
    __array_priority__ = 1000

    def __init__(self, coeffs, order: int):
        _check_order(order)
        coeffs = np.asarray(coeffs)
        if coeffs.shape[-1:] != (n_coeffs(order),):
            raise ValueError(f"coefficient axis has length {coeffs.shape[-1:]}, expected {n_coeffs(order)}")
        self.coeffs = coeffs
        self.order = int(order)

    # -- construction ------------------------------------------------------
    @classmethod
    def constant(cls, value, order: int) -> "Jet":
        value = np.asarray(value)
        c = np.zeros(value.shape + (n_coeffs(order),), dtype=np.result_type(value, float))
        c[..., 0] = value
        return cls(c, order)

    @classmethod
    def variable(cls, value: float, index: int, order: int) -> "Jet":
        j = cls.constant(float(value), order)
        if order >= 1:
            j.coeffs[1 + index] = 1.0
        return j

    # -- basic views -------------------------------------------------------
    @property
    def shape(self) -> tuple:
        return self.coeffs.shape[:-1]

    @property
    def ndim(self) -> int:
        return self.coeffs.ndim - 1

    @property
    def dtype(self):
        return self.coeffs.dtype

    @property
    def value(self) -> np.ndarray:
        return self.coeffs[..., 0]

    def coeff(self, alpha: Sequence[int]) -> np.ndarray:
        """Stored Taylor coefficient for multi-index ``alpha``."""
        return self.coeffs[..., _position(self.order)[tuple(alpha)]]

    def partial(self, alpha: Sequence[int]) -> np.ndarray:
        """Raw partial derivative ``d^alpha f`` at the base point."""
        return self.coeff(alpha) * math.prod(math.factorial(a) for a in alpha)

    def gradient(self) -> np.ndarray:
        """First partials as a plain array with a trailing axis of length 4."""
        if self.order < 1:
            raise ValueError("gradient needs a jet of order >= 1")
        return self.coeffs[..., 1:1 + NVAR]

    def partials(self) -> np.ndarray:
        """All raw partials, ordered like :func:`multi_indices`."""
        return self.coeffs * _factorials(self.order)

    def d(self, i: int) -> "Jet":
        """Derivative along coordinate ``i``; the result has order - 1."""
        if self.order < 1:
            raise ValueError("cannot differentiate an order-0 jet")
        src, fac = _deriv_tables(self.order)[i]
        return Jet(self.coeffs[..., src] * fac, self.order - 1)

    def grad(self) -> "Jet":
        """Jet of all first derivatives with a new trailing tensor axis."""
        if self.order < 1:
            raise ValueError("cannot differentiate an order-0 jet")
        parts = [self.coeffs[..., src] * fac for src, fac in _deriv_tables(self.order)]
        return Jet(np.stack(parts, axis=-2), self.order - 1)

    def truncate(self, order: int) -> "Jet":
        if order > self.order:
            raise ValueError("cannot raise jet order by truncation")
        return Jet(self.coeffs[..., : n_coeffs(order)], order)

    def __getitem__(self, idx) -> "Jet":
        if not isinstance(idx, tuple):
            idx = (idx,)
        if any(i is Ellipsis for i in idx):
            idx = idx + (slice(None),)
        return Jet(self.coeffs[idx], self.order)

    def transpose(self, *axes) -> "Jet":
        if not axes:
            axes = tuple(reversed(range(self.ndim)))
        return Jet(np.transpose(self.coeffs, tuple(axes) + (self.ndim,)), self.order)

    def permute(self, spec: str) -> "Jet":
        """Reorder tensor axes with an einsum-style spec such as ``"jki->ijk"``."""
        src, dst = spec.replace(" ", "").split("->")
        return Jet(np.einsum(f"{src}Z->{dst}Z", self.coeffs), self.order)

    @property
    def T(self) -> "Jet":
        return self.transpose()

    def reshape(self, *shape) -> "Jet":
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        return Jet(self.coeffs.reshape(tuple(shape) + (self.coeffs.shape[-1],)), self.order)

    @property
    def real(self) -> "Jet":
        return Jet(self.coeffs.real.copy(), self.order)

    @property
    def imag(self) -> "Jet":
        return Jet(self.coeffs.imag.copy(), self.order)

    def conj(self) -> "Jet":
        return Jet(np.conj(self.coeffs), self.order)

    def sum(self, axis=None) -> "Jet":
        if axis is None:
            axis = tuple(range(self.ndim))
        return Jet(self.coeffs.sum(axis=axis), self.order)

    def trace(self) -> "Jet":
        return Jet(np.trace(self.coeffs, axis1=0, axis2=1), self.order)

    def __repr__(self) -> str:
        return f"Jet(order={self.order}, shape={self.shape}, value={self.value!r})"

    # -- arithmetic --------------------------------------------------------
    def _lift(self, other) -> "Jet":
        if isinstance(other, Jet):
            if other.order != self.order:
                raise ValueError(f"jet order mismatch: {self.order} vs {other.order}")
            return other
        return Jet.constant(other, self.order)

    def __add__(self, other):
        if isinstance(other, Jet):
            return Jet(self.coeffs + self._lift(other).coeffs, self.order)
        c = self.coeffs.copy() if np.ndim(other) == 0 else np.broadcast_to(
            self.coeffs, np.broadcast_shapes(self.shape, np.shape(other)) + self.coeffs.shape[-1:]).copy()
        c = c.astype(np.result_type(c, other), copy=False)
        c[..., 0] += other
        return Jet(c, self.order)

    __radd__ = __add__

    def __neg__(self):
        return Jet(-self.coeffs, self.order)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, Jet):
            return Jet(self.coeffs * np.asarray(other)[..., None], self.order)
        other = self._lift(other)
        I, J, S = _mul_tables(self.order)
        return Jet((self.coeffs[..., I] * other.coeffs[..., J]) @ S, self.order)

    __rmul__ = __mul__

    def reciprocal(self) -> "Jet":
        v = self.value
        if np.any(v == 0):
            raise ZeroDivisionError("division by a jet with zero value")
        r = 1.0 / v
        return compose(self, [r, -r**2, r**3, -r**4])

    def __truediv__(self, other):
        if not isinstance(other, Jet):
            other = np.asarray(other)
            if np.any(other == 0):
                raise ZeroDivisionError("division by zero")
            return Jet(self.coeffs / other[..., None], self.order)
        return self * self._lift(other).reciprocal()

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __pow__(self, n):
        if isinstance(n, (int, np.integer)) and n >= 0:
            out = Jet.constant(np.ones(self.shape, dtype=self.dtype), self.order)
            for _ in range(n):
                out = out * self
            return out
        return pow_const(self, n)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)


def compose(a: Jet, taylor: Sequence) -> Jet:
    """Compose a scalar function with jet ``a`` (elementwise).

    ``taylor[k]`` holds ``f^(k)(a0) / k!`` broadcastable against ``a.value``.
    This is the truncated Faa di Bruno rule: ``sum_k taylor[k] * (a - a0)^k``.
    """
    n = a.order
    nil = Jet(a.coeffs.copy(), n)
    nil.coeffs[..., 0] = 0
    out = Jet.constant(np.asarray(taylor[0]) * np.ones(a.shape), n)
    power = None
    for k in range(1, n + 1):
        power = nil if power is None else power * nil
        out = out + power * np.asarray(taylor[k])
    return out


# -- elementary functions ----------------------------------------------------

def _as_jet(a) -> Jet:
    if not isinstance(a, Jet):
        raise TypeError("expected a Jet")
    return a


def exp(a: Jet) -> Jet:
    e = np.exp(_as_jet(a).value)
    return compose(a, [e, e, e / 2, e / 6])


def ln(a: Jet) -> Jet:
    v = _as_jet(a).value
    if not np.iscomplexobj(v) and np.any(v <= 0):
        raise ValueError("ln requires a positive value")
    r = 1.0 / v
    return compose(a, [np.log(v), r, -r**2 / 2, r**3 / 3])


def pow_const(a: Jet, p: float) -> Jet:
    """``a ** p`` for a real constant exponent."""
    v = _as_jet(a).value
    if not np.iscomplexobj(v):
        if float(p).is_integer():
            if p < 0 and np.any(v == 0):
                raise ZeroDivisionError("negative power of a zero value")
        elif np.any(v <= 0):
            raise ValueError("non-integer power requires a positive value")
    coeffs = []
    binom = 1.0
    for k in range(4):
        if binom == 0:
            coeffs.append(np.zeros_like(v))
        else:
            coeffs.append(binom * v ** (p - k))
        binom *= (p - k) / (k + 1)
    return compose(a, coeffs)


def sqrt(a: Jet) -> Jet:
    v = _as_jet(a).value
    if not np.iscomplexobj(v) and np.any(v <= 0):
        raise ValueError("sqrt requires a positive value")
    r = np.sqrt(v)
    return compose(a, [r, 1 / (2 * r), -1 / (8 * r**3), 1 / (16 * r**5)])


def sin(a: Jet) -> Jet:
    s, c = np.sin(_as_jet(a).value), np.cos(a.value)
    return compose(a, [s, c, -s / 2, -c / 6])


def cos(a: Jet) -> Jet:
    s, c = np.sin(_as_jet(a).value), np.cos(a.value)
    return compose(a, [c, -s, -c / 2, s / 6])


def tan(a: Jet) -> Jet:
    v = _as_jet(a).value
    if np.any(np.abs(np.cos(v)) < 1e-14):
        raise ValueError("tan evaluated at a pole")
    t = np.tan(v)
    u = 1 + t * t
    return compose(a, [t, u, t * u, u * (1 + 3 * t * t) / 3])


def tanh(a: Jet) -> Jet:
    t = np.tanh(_as_jet(a).value)
    u = 1 - t * t
    return compose(a, [t, u, -t * u, u * (3 * t * t - 1) / 3])


FUNCTIONS = {
    "exp": exp, "ln": ln, "sqrt": sqrt, "sin": sin, "cos": cos,
    "tan": tan, "tanh": tanh,
}


def jet_func(a: Jet, f: str, p: float | None = None) -> Jet:
    """Apply a named elementary function; ``pow_const`` takes exponent ``p``."""
    if f == "pow_const":
        if p is None:
            raise ValueError("pow_const needs an exponent")
        return pow_const(a, p)
    try:
        return FUNCTIONS[f](a)
    except KeyError:
        raise ValueError(f"unknown jet function {f!r}") from None


def jet_arith(a: Jet, b: Jet, op: str) -> Jet:
    """Binary arithmetic by name: add, sub, mul, div."""
    if a.order != b.order:
        raise ValueError(f"jet order mismatch: {a.order} vs {b.order}")
    if op == "add":
        return a + b
    if op == "sub":
        return a - b
    if op == "mul":
        return a * b
    if op == "div":
        return a / b
    raise ValueError(f"unknown operation {op!r}")


# -- seeding and assembly -----------------------------------------------------

def seed_coordinates(p, order: int) -> tuple[Jet, Jet, Jet, Jet]:
    """Jets of the four coordinate functions at point ``p``."""
    _check_order(order)
    p = np.asarray(p, dtype=float)
    if p.shape != (NVAR,) or not np.all(np.isfinite(p)):
        raise ValueError("a chart point needs four finite coordinates")
    return tuple(Jet.variable(p[i], i, order) for i in range(NVAR))


def zeros(shape, order: int, dtype=float) -> Jet:
    return Jet(np.zeros(tuple(shape) + (n_coeffs(order),), dtype=dtype), order)


def stack(items, order: int | None = None) -> Jet:
    """Build a tensor jet from a nested list of jets and plain numbers."""
    def find_order(x):
        if isinstance(x, Jet):
            return x.order
        if isinstance(x, (list, tuple)):
            for y in x:
                o = find_order(y)
                if o is not None:
                    return o
        return None

    if order is None:
        order = find_order(items)
        if order is None:
            raise ValueError("cannot infer jet order from constants only")

    def build(x):
        if isinstance(x, (list, tuple)):
            arrs = [build(y) for y in x]
            dt = np.result_type(*arrs)
            return np.stack([a.astype(dt, copy=False) for a in arrs], axis=0)
        if isinstance(x, Jet):
            if x.order != order:
                raise ValueError("jet order mismatch while stacking")
            return x.coeffs
        return Jet.constant(x, order).coeffs

    return Jet(build(items), order)


def contract(subscripts: str, a, b) -> Jet:
    """``einsum`` of two operands, either of which may be a plain array."""
    ins, out = subscripts.replace(" ", "").split("->")
    sa, sb = ins.split(",")
    if isinstance(a, Jet) and isinstance(b, Jet):
        if a.order != b.order:
            raise ValueError(f"jet order mismatch: {a.order} vs {b.order}")
        I, J, S = _mul_tables(a.order)
        prod = np.einsum(f"{sa}@,{sb}@->{out}@".replace("@", "Z"), a.coeffs[..., I], b.coeffs[..., J])
        return Jet(prod @ S, a.order)
    if isinstance(a, Jet):
        return Jet(np.einsum(f"{sa}Z,{sb}->{out}Z", a.coeffs, np.asarray(b)), a.order)
    if isinstance(b, Jet):
        return Jet(np.einsum(f"{sa},{sb}Z->{out}Z", np.asarray(a), b.coeffs), b.order)
    return np.einsum(subscripts, a, b)


def matmul(a, b) -> Jet:
    """Matrix product; vectors are treated as columns on the right."""
    sa = "ij" if np.ndim(a.coeffs if isinstance(a, Jet) else a) - isinstance(a, Jet) == 2 else "j"
    sb = "jk" if np.ndim(b.coeffs if isinstance(b, Jet) else b) - isinstance(b, Jet) == 2 else "j"
    out = ("i" if sa == "ij" else "") + ("k" if sb == "jk" else "")
    return contract(f"{sa},{sb}->{out}", a, b)


def outer(a, b) -> Jet:
    return contract("i,j->ij", a, b)


def inv(G: Jet) -> Jet:
    """Inverse of a square matrix jet by a terminating Neumann series."""
    G0 = G.value
    if abs(np.linalg.det(G0)) < 1e-300:
        raise np.linalg.LinAlgError("singular matrix jet")
    G0inv = np.linalg.inv(G0)
    N = Jet(G.coeffs.copy(), G.order)
    N.coeffs[..., 0] = 0
    M = contract("ij,jk->ik", -G0inv, N)
    term = Jet.constant(G0inv, G.order)
    out = term
    for _ in range(G.order):
        term = contract("ij,jk->ik", M, term)
        out = out + term
    return out


def logdet(G: Jet) -> Jet:
    """``ln|det G|`` as a scalar jet (the series in ``G0^{-1} N`` terminates)."""
    G0 = G.value
    sign, ld = np.linalg.slogdet(G0)
    if sign == 0:
        raise np.linalg.LinAlgError("singular matrix jet")
    N = Jet(G.coeffs.copy(), G.order)
    N.coeffs[..., 0] = 0
    M = contract("ij,jk->ik", np.linalg.inv(G0), N)
    out = Jet.constant(np.log(np.abs(np.linalg.det(G0))) if np.iscomplexobj(G0) else ld, G.order)
    power = M
    for k in range(1, G.order + 1):
        out = out + power.trace() * ((-1) ** (k + 1) / k)
        if k < G.order:
            power = contract("ij,jk->ik", power, M)
    return out


def det(G: Jet) -> Jet:
    sign = np.sign(np.linalg.det(G.value))
    return exp(logdet(G)) * sign


def complex_coordinate(x: Jet, y: Jet) -> Jet:
    """The holomorphic coordinate ``z = x + i y`` as a complex jet."""
    return x + y * 1j


def holomorphic_lift(taylor_z: Sequence[complex], z0: complex, ix: int, iy: int, order: int) -> Jet:
    """Lift a one-variable complex Taylor polynomial to a 4-variable jet.

    ``taylor_z[k] = f^(k)(z0)/k!``.  The substitution ``dz = dx + i dy`` is
    carried out on coordinates ``ix`` and ``iy``.
    """
    p = np.zeros(NVAR)
    p[ix], p[iy] = np.real(z0), np.imag(z0)
    coords = seed_coordinates(p, order)
    z = complex_coordinate(coords[ix], coords[iy])
    return compose(z, [complex(c) for c in list(taylor_z) + [0] * (4 - len(taylor_z))])
