"""Independent numerical oracles shared by the test modules.

Nothing here imports the jet machinery: the finite-difference and
expression tools work on plain floats so they can check the jets.
"""

from __future__ import annotations

import math
from itertools import product

import numpy as np

# Central-difference stencils: offsets and weights for the k-th derivative
# with O(h^2) truncation error.
STENCILS = {
    1: ((-1, 1), (-0.5, 0.5)),
    2: ((-1, 0, 1), (1.0, -2.0, 1.0)),
    3: ((-2, -1, 1, 2), (-0.5, 1.0, -1.0, 0.5)),
}
DEFAULT_STEP = {1: 1e-3, 2: 1e-2, 3: 2e-2}


def central(f, k: int, h: float) -> float:
    offs, w = STENCILS[k]
    return sum(wi * f(o * h) for o, wi in zip(offs, w)) / h**k


def richardson(f, k: int, h: float | None = None, levels: int = 3) -> float:
    """k-th derivative of a scalar function at 0 by a Romberg table.

    Each level halves the step and cancels the next even power of ``h``.
    """
    h = DEFAULT_STEP[k] if h is None else h
    row = [central(f, k, h / 2**i) for i in range(levels)]
    for m in range(1, levels):
        row = [row[i + 1] + (row[i + 1] - row[i]) / (4**m - 1) for i in range(len(row) - 1)]
    return row[0]


def directional(F, p, u, k: int, h: float | None = None) -> float:
    p, u = np.asarray(p, float), np.asarray(u, float)
    return richardson(lambda s: F(p + s * u), k, h)


def taylor_directional(coeff_of, u, k: int) -> float:
    """k-th derivative along u reconstructed from Taylor coefficients.

    ``d^k/ds^k f(p + s u) = k! * sum_{|a|=k} c_a u^a``.
    """
    total = 0.0
    for a in product(range(k + 1), repeat=4):
        if sum(a) == k:
            total += coeff_of(a) * math.prod(ui**ai for ui, ai in zip(u, a))
    return math.factorial(k) * total


def partial_fd(F, p, alpha, h: float = 1e-3) -> float:
    """Mixed partial via nested central differences plus Richardson."""
    p = np.asarray(p, float)

    def nested(step):
        terms = [(p.copy(), 1.0)]
        for i, a in enumerate(alpha):
            for _ in range(a):
                new = []
                for q, w in terms:
                    for sgn in (1, -1):
                        r = q.copy()
                        r[i] += sgn * step
                        new.append((r, w * sgn / (2 * step)))
                terms = new
        return sum(w * F(q) for q, w in terms)

    coarse, fine = nested(h), nested(h / 2)
    return fine + (fine - coarse) / 3


# -- random composite expressions ---------------------------------------------

UNARY = ("exp", "sin", "cos", "tanh", "tan", "ln", "sqrt", "pow")
BINARY = ("add", "sub", "mul", "div")


def random_expression(rng: np.random.Generator, depth: int = 3):
    if depth == 0 or rng.random() < 0.2:
        if rng.random() < 0.75:
            return ("var", int(rng.integers(4)))
        return ("const", float(np.round(rng.uniform(-2, 2), 3)))
    if rng.random() < 0.5:
        op = UNARY[int(rng.integers(len(UNARY)))]
        node = (op, random_expression(rng, depth - 1))
        if op == "pow":
            node += (float(rng.choice([-1.5, -1.0, 0.5, 2.5, 3.0])),)
        return node
    op = BINARY[int(rng.integers(len(BINARY)))]
    return (op, random_expression(rng, depth - 1), random_expression(rng, depth - 1))


def evaluate(expr, coords, ns):
    """Evaluate ``expr`` with elementary functions taken from ``ns``.

    Arguments of ln, sqrt, pow, division and tan are squashed through tanh
    so every expression is defined everywhere.
    """
    tag = expr[0]
    if tag == "var":
        return coords[expr[1]]
    if tag == "const":
        return expr[1]
    if tag in BINARY:
        a, b = evaluate(expr[1], coords, ns), evaluate(expr[2], coords, ns)
        if tag == "add":
            return a + b
        if tag == "sub":
            return a - b
        if tag == "mul":
            return a * b
        return a / (2.0 + ns["tanh"](b))
    a = evaluate(expr[1], coords, ns)
    if tag in ("exp", "sin", "cos", "tanh"):
        return ns[tag](ns["tanh"](a) * 2.0) if tag == "exp" else ns[tag](a)
    if tag == "tan":
        return ns["tan"](ns["tanh"](a) * 1.2)
    pos = ns["tanh"](a) + 1.5
    if tag == "ln":
        return ns["ln"](pos)
    if tag == "sqrt":
        return ns["sqrt"](pos)
    return ns["pow"](pos, expr[2])


FLOAT_NS = {
    "exp": math.exp, "sin": math.sin, "cos": math.cos, "tanh": math.tanh,
    "tan": math.tan, "ln": math.log, "sqrt": math.sqrt, "pow": lambda a, p: a**p,
}


def random_polynomial(rng, degree: int = 3, terms: int = 6, low: int = -4, high: int = 5):
    """Integer polynomial in four variables as ``{multi-index: coeff}``."""
    poly = {}
    for _ in range(terms):
        a = [0, 0, 0, 0]
        for _ in range(int(rng.integers(degree + 1))):
            a[int(rng.integers(4))] += 1
        poly[tuple(a)] = poly.get(tuple(a), 0) + int(rng.integers(low, high))
    return poly


def poly_mul(p, q):
    out = {}
    for a, ca in p.items():
        for b, cb in q.items():
            c = tuple(x + y for x, y in zip(a, b))
            out[c] = out.get(c, 0) + ca * cb
    return out


def poly_shift(p, x0):
    """Taylor coefficients of polynomial ``p`` about integer point ``x0``."""
    out = {}
    for a, ca in p.items():
        # expand prod (x0_i + h_i)^a_i
        for b in product(*(range(ai + 1) for ai in a)):
            w = ca * math.prod(math.comb(ai, bi) * x0i ** (ai - bi) for ai, bi, x0i in zip(a, b, x0))
            out[b] = out.get(b, 0) + w
    return out


# -- curvature oracle by finite differences of metric components --------------

def fd_scalar_curvature(metric, p, h: float = 1e-3) -> float:
    """Scalar curvature from second-order finite differences of ``metric(p)``.

    Christoffel symbols are differentiated numerically, so this shares no
    code path with the jet engine.  ``R^i_jkl = d_k G^i_lj - d_l G^i_kj +
    G^i_km G^m_lj - G^i_lm G^m_kj`` and ``Ric_jl = R^i_jil``.
    """
    p = np.asarray(p, float)

    def dmetric(q):
        d = np.empty((4, 4, 4))
        for k in range(4):
            e = np.zeros(4)
            e[k] = h
            d[:, :, k] = (metric(q + e) - metric(q - e)) / (2 * h)
        return d

    def gamma(q):
        g = metric(q)
        gi = np.linalg.inv(g)
        dg = dmetric(q)
        B = (np.einsum("lkj->ljk", dg) + np.einsum("jlk->ljk", dg) - np.einsum("jkl->ljk", dg))
        return 0.5 * np.einsum("il,ljk->ijk", gi, B)

    G = gamma(p)
    dG = np.empty((4, 4, 4, 4))
    for l in range(4):
        e = np.zeros(4)
        e[l] = h
        dG[..., l] = (gamma(p + e) - gamma(p - e)) / (2 * h)
    R = (np.einsum("iljk->ijkl", dG) - np.einsum("ikjl->ijkl", dG)
         + np.einsum("ikm,mlj->ijkl", G, G) - np.einsum("ilm,mkj->ijkl", G, G))
    ric = np.einsum("ijil->jl", R)
    return float(np.einsum("jl,jl->", np.linalg.inv(metric(p)), ric))
