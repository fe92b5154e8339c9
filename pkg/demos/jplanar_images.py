"""Push a geodesic through the flow of v and look at what comes out.

The flow of a c-projective vector field maps J-planar curves to J-planar
curves.  Geodesics are J-planar, but on the essential charts L4 and D3 their
images are no longer geodesics.  A curve with a forced normal acceleration
stays visibly non-J-planar under the same flow.
"""

from cproj import dynamics as dyn
from cproj.families import FamilySpec

starts = {
    "L4": ((0.6, -0.7, 0.1, 0.2), (0.3, 0.2, 0.4, -0.3)),
    "D3": ((0.8, 0.0, 0.0, 0.3), (0.1, 0.1, 0.1, -0.1)),
}

for fid, (p0, v0) in starts.items():
    spec = FamilySpec(fid)
    geo = dyn.geodesic(spec, p0, v0, t_max=0.5, steps=128)
    print(f"{fid}: geodesic with energy drift {dyn.energy_drift(geo, spec):.1e}")
    for tau in (0.3, 0.7):
        img = dyn.pushforward(spec, geo, tau)
        print(f"  tau={tau}: J-planar residual {dyn.jplanar_residual(img, spec):.1e}, "
              f"geodesic residual {dyn.geodesic_residual(img, spec):.3f}")
    control = dyn.jplanar_curve(spec, p0, v0, t_max=0.5, steps=128, normal=0.1)
    rep = dyn.flow_invariance_check(spec, control, [0.3, 0.7], control=True)
    print("  control:", ", ".join(f"{c.check} {c.max_residual:.3f}" for c in rep.checks))

# CSV export for plotting elsewhere
spec = FamilySpec("L4")
with open("l4_geodesic.csv", "w", encoding="utf-8") as fh:
    dyn.geodesic(spec, *starts["L4"], t_max=0.5, steps=64).to_csv(fh)
print("\nwrote l4_geodesic.csv")
