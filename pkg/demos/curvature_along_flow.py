"""Scalar curvature of the companion metric along the flow of v.

On the L2 and D2 charts the curvature restricted to a flow line is an
explicit rational function of exp(tau).  For most parameters it blows up
at one end of the line.  On a few parameter loci it is constant, and
those are the metrics of constant holomorphic sectional curvature.
"""

import numpy as np

from cproj import dynamics as dyn
from cproj.families import FamilySpec

taus = np.linspace(-2, 2, 9)

loci = {
    "beta = 0,    c1^2 d2^2 = c2^2 d1^2": FamilySpec("L2", beta=0, c1=1, c2=2, d1=1, d2=2, eps=-1, c=0.3),
    "beta = -1/2, c1 d2^2 = c2 d1^2": FamilySpec("L2", beta=-0.5, c1=1, c2=4, d1=1, d2=2, eps=-1, c=0.3),
    "beta = -2,   d1^2 = d2^2": FamilySpec("L2", beta=-2, c1=1, c2=2, d1=1, d2=1, eps=-1, c=-0.5),
}
for label, spec in loci.items():
    num = dyn.scal_along_flow(spec, (0, 0, 0, 0), taus).values
    closed = dyn.scal_closed_form(spec, taus).values
    print(f"L2 {label}: Scal in [{num.min():.9f}, {num.max():.9f}], closed form {closed[0]:.9f}")

# G'' = 18/d1^2 makes the degenerate chart constant too, with the opposite sign.
spec = FamilySpec("D2", beta=-2, gfun=(1.0, 1.0, 9.0), c=0.5)
vals = dyn.scal_along_flow(spec, (0, 0.1, 0, 0.2), taus).values
print(f"D2 beta = -2, G = 9u^2 + u + 1: Scal in [{vals.min():.9f}, {vals.max():.9f}]")

# Off the loci, and with beta > 1, the curvature is unbounded as tau grows.
spec = FamilySpec("L2", beta=1.6, c1=1, c2=2, d1=1, d2=1.7, eps=-1, c=-0.5)
long = np.linspace(0, 20, 5)
print("\nL2 beta = 1.6, generic:")
for t, v in zip(long, dyn.scal_closed_form(spec, long).values):
    print(f"  tau = {t:5.1f}   Scal = {v: .6e}")
