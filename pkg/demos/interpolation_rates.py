"""Boundary interpolation rates: smooth functions vs a corner singularity.

The edge-average (Crouzeix-Raviart) interpolant of a function with H^{1+r}
regularity converges at rate h^{r + 1/2} in the boundary L2 norm.  Near a
reentrant corner with interior angle omega the leading eigenfunction
singularity behaves like rho^r cos(r theta) with r = pi/omega, which pins
the rate at 7/6 on the L-shaped domain (omega = 3 pi/2) and 1 on the slit
square (omega = 2 pi).  For genuinely smooth functions the guarantee is
h^{3/2} but the observed order is better (about 2, the plain interpolation
order of linear traces).  This script measures both regimes.
"""

import numpy as np

from steklovfem import (CR, DomainSpec, FeFunction, boundary_l2_error,
                        build_dof_map, convergence_ratio, generate_mesh,
                        interpolate_cr, singular_model)
from steklovfem.interp import as_point_function


def interpolation_errors(kind, f, levels=(8, 16, 32, 64, 128)):
    errors = []
    for level in levels:
        mesh = generate_mesh(DomainSpec(kind), level)
        dofmap = build_dof_map(mesh, CR)
        fn = FeFunction(mesh, dofmap, interpolate_cr(mesh, dofmap, f))
        errors.append(boundary_l2_error(fn, f))
    return errors


def report(title, errors, target):
    print(f"--- {title} (target rate {target}) ---")
    print(f"{'level':>6} {'error':>12} {'rate':>8}")
    levels = (8, 16, 32, 64, 128)
    for i, (level, err) in enumerate(zip(levels, errors)):
        rate = ""
        if i + 1 < len(errors):
            rate = f"{convergence_ratio(err, errors[i + 1]):8.4f}"
        print(f"{level:>6} {err:12.3e} {rate:>8}")
    print()


smooth = as_point_function(lambda x, y: np.cos(x) * np.cosh(y))
report("smooth function on the unit square",
       interpolation_errors("square", smooth), "at least 3/2")

report("corner singularity on the L-shaped domain",
       interpolation_errors("lshape", singular_model(DomainSpec("lshape"))),
       "7/6")

report("corner singularity on the slit square",
       interpolation_errors("slit", singular_model(DomainSpec("slit"))),
       "1")
