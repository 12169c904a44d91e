"""Small problem setups shared by the tests."""
import numpy as np

from dgtwophase.dgspace import P, S, DgSpace, l2_project_analytic
from dgtwophase.mesh import build_macro
from dgtwophase.physics import FluidParams, ProblemSetup, RockParams

UNIT_K = ((1.0, 0.0), (0.0, 1.0))


def const(v):
    return lambda x, y: np.full(np.broadcast(x, y).shape, float(v))


def never(x, y):
    return np.zeros(np.broadcast(x, y).shape, dtype=bool)


def box_setup(extent=(1.0, 1.0), macro=(2, 2), gravity=True, K_out=((1e-10, -5e-11),
              (-5e-11, 1e-10)), K_lens=((6.64e-14, 0), (0, 6.64e-14)), **kw):
    """Lens-like materials on a small box; options as :class:`ProblemSetup` fields."""
    fluids = FluidParams() if gravity else FluidParams(g=(0.0, 0.0))
    W, H = extent
    args = dict(
        name="box", fluids=fluids,
        rock_lens=RockParams(0.39, 0.10, 0.0, 2.0, 5000.0, K_lens),
        rock_outer=RockParams(0.40, 0.12, 0.0, 2.7, 755.0, K_out),
        lens=lambda x, y: (np.abs(x - 0.5 * W) < 0.2 * W) & (np.abs(y - 0.5 * H) < 0.1 * H),
        extent=extent, macro=macro,
        p_init=lambda x, y: (H - y) * 9810.0 + 0 * x,
        p_dirichlet=lambda x, y: (H - y) * 9810.0 + 0 * x,
        dirichlet=lambda x, y: (x < 1e-12) | (x > W - 1e-12),
        inflow=lambda x, y: (y > H - 1e-12) & (np.abs(x - 0.5 * W) < 0.25 * W),
    )
    args.update(kw)
    return ProblemSetup(**args)


def mesh_for(setup, max_level=3):
    return build_macro(setup.macro[0], setup.macro[1], setup.extent, max_level)


def project(space, p, s):
    u = l2_project_analytic(space, p, field=P)
    return l2_project_analytic(space, s, field=S, out=u)


def space_for(setup, orders, max_level=3):
    return DgSpace(mesh_for(setup, max_level), orders)


def quad_integral(u, field, f=None, n=6):
    """Independent tensor-Gauss integral of ``f(x, y) * u_field`` over the mesh."""
    t, w = np.polynomial.legendre.leggauss(n)
    X, Y = np.meshgrid(t, t, indexing="ij")
    xi, eta, ww = X.ravel(), Y.ravel(), np.outer(w, w).ravel()
    mesh = u.space.mesh
    els = np.arange(mesh.n_elements)
    vals = u.evaluate(field, els, np.broadcast_to(xi, (len(els), len(xi))),
                      np.broadcast_to(eta, (len(els), len(xi))))
    x = mesh.center[:, 0, None] + 0.5 * mesh.dx[:, None] * xi
    y = mesh.center[:, 1, None] + 0.5 * mesh.dy[:, None] * eta
    weight = 1.0 if f is None else f(x, y)
    return float(np.sum(vals * weight * ww * (0.25 * mesh.area)[:, None]))


def fd_check(tf, u, rng, n_dirs=10, h=1e-6):
    """Worst relative error of J d against central differences over random d.

    Directions are scaled per field so that the step is ``h`` relative to
    the size of the pressure and of the saturation respectively.
    """
    sp = tf.disc.space
    _, J = tf(u, sbar_is_u=True)
    worst = 0.0
    for _ in range(n_dirs):
        d = rng.normal(size=u.size)
        for f in (P, S):
            idx = sp.field_slices[f]
            d[idx] *= max(np.abs(u[idx]).max(), 1.0) / np.abs(d[idx]).max()
        fd = (tf(u + h * d, sbar_is_u=True, jacobian=False).residual
              - tf(u - h * d, sbar_is_u=True, jacobian=False).residual) / (2 * h)
        an = J @ d
        worst = max(worst, np.linalg.norm(an - fd) / np.linalg.norm(an))
    return worst


def admissible_state(sp, rng, s_lo=0.05, s_hi=0.5):
    """Random (p, s) whose saturation stays inside (0, 1 - s_wr)."""
    u = project(sp, lambda x, y: (1 - y) * 9810 + 300 * np.sin(3 * x),
                lambda x, y: 0.5 * (s_lo + s_hi) + 0 * x)
    c = u.coeffs.copy()
    s_idx = sp.field_slices[S]
    scale = 0.25 * (s_hi - s_lo) / np.sqrt(np.max(sp.block))
    c[s_idx] += scale * rng.uniform(-1, 1, s_idx.size)
    p_idx = sp.field_slices[P]
    c[p_idx] += 50 * rng.normal(size=p_idx.size)
    return c
