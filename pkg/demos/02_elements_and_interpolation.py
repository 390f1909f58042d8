"""Tour the discrete spaces: quadrature, interpolation, and flux identities.

The velocity pair is an enriched piecewise-linear space in the free-flow
region (linear hat functions plus one normal edge bubble per edge) and
the lowest-order H(div) space in the porous region (one flux unknown per
edge).  Both interpolation operators are built around edge fluxes, which
is what makes mass transfer across the interface exact.  This demo checks
the identities numerically on a random smooth field.
"""

import numpy as np

from bfdarcy import generate_stacked_rect, interpolate_br, interpolate_rt0, project_p0, quad_rule
from bfdarcy.elements import br_space, edge_rule, rt0_space

mesh = generate_stacked_rect((-0.5, 0.5, 0.5, 1.5), (-0.5, 0.5, -0.5, 0.5), 4, 4, 4)
sp_b, sp_d = br_space(mesh), rt0_space(mesh)
print("free-flow velocity unknowns:", sp_b.n_dofs)
print("porous velocity unknowns:", sp_d.n_dofs)

# Triangle quadrature is exact for polynomials up to the requested total
# degree.  Integrating x^2 y over the reference triangle gives the closed
# form a! b! / (a + b + 2)! = 2!1!/5! with (a, b) = (2, 1).
rule = quad_rule(4)
val = np.dot(rule.weights, rule.bary[:, 1] ** 2 * rule.bary[:, 2])
print("\nquadrature check, integral of x^2 y over reference triangle:")
print("  computed %.12f   exact %.12f" % (val, 2.0 / 120.0))

# A smooth divergence-free-ish test field and its exact divergence.
def u(pts):
    x, y = pts[:, 0], pts[:, 1]
    return np.stack([np.sin(x) * y**2, x * np.cos(y)], axis=1)

def div_u(pts):
    x, y = pts[:, 0], pts[:, 1]
    return np.cos(x) * y**2 - x * np.sin(y)

# Interpolation assigns vertex values (enriched-linear space only) and
# per-edge fluxes.  The defining property: the interpolant carries the
# same flux through every edge as the original field.
cb = interpolate_br(u, mesh, sp_b, edge_points=8)
cd = interpolate_rt0(u, mesh, sp_d, edge_points=8)

t, w = edge_rule(8)
normals = mesh.outward_normals()

def exact_fluxes(eids):
    a = mesh.vertices[mesh.edges[eids, 0]]
    b = mesh.vertices[mesh.edges[eids, 1]]
    pts = a[:, None, :] + t[None, :, None] * (b - a)[:, None, :]
    vals = u(pts.reshape(-1, 2)).reshape(pts.shape)
    wts = mesh.edge_lengths[eids][:, None] * w[None, :]
    return np.einsum("eq,eqd,ed->e", wts, vals, normals[eids])

# In the enriched-linear space the bubble coefficient IS the total edge
# flux: vertex functions are corrected so they carry none of it.
flux_defect_b = np.abs(cb[2 * np.unique(mesh.triangles[sp_b.tri_ids]).size:]
                       - exact_fluxes(sp_b.edge_ids)).max()
flux_defect_d = np.abs(cd - exact_fluxes(sp_d.edge_ids)).max()
print("\nmax per-edge flux defect, enriched-linear interpolant: %.2e" % flux_defect_b)
print("max per-edge flux defect, H(div) interpolant:           %.2e" % flux_defect_d)

# Because fluxes are preserved, taking the divergence commutes with
# interpolating: elementwise mean of div u equals the divergence of the
# interpolant.  For the H(div) space that divergence is the signed flux
# sum over the triangle boundary divided by its area.
p0_div = project_p0(div_u, mesh, degree=8)
fluxes = cd[sp_d.l2g] * mesh.tri_edge_signs[sp_d.tri_ids]
div_interp = fluxes.sum(axis=1) / mesh.areas[sp_d.tri_ids]
defect = np.abs(div_interp - p0_div[sp_d.tri_ids]).max()
print("\ncommuting identity (porous side): max defect %.2e" % defect)
print("  div(interpolate(u)) == project(div u) elementwise")
