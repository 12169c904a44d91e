"""Residual error indicator for the saturation equation and h/p marking.

The indicator per element is

    eta_E^2 = h_E^2 ||R_vol||_E^2
              + 1/2 sum_{interior e}  (h_e ||R_e2||_e^2 + 1/h_e ||R_e1||_e^2)
              + sum_{boundary e}      (h_e ||R_e2||_e^2 + 1/h_e ||R_e1||_e^2)

with the strong residual ``R_vol``, the penalised saturation jump ``R_e1``
and the jump of the normal saturation flux ``R_e2``.  All tolerances below
are in units of ``eta^2``, the quantity that is accumulated per element.
"""
import logging
from dataclasses import dataclass

import numpy as np

from .dgspace import DgFunction
from .forms import Discretization
from .mesh import COARSEN, KEEP, REFINE

log = logging.getLogger(__name__)

P_STRATEGIES = ("off", "diff", "frac", "frac_plain")


@dataclass
class AdaptConfig:
    max_level: int = 3
    max_order: int = 3
    min_order: int = 1
    p_strategy: str = "diff"
    initial_htol: float = 1e-16
    initial_passes: int = 3
    coarsen_factor: float = 0.01
    ptol_factor: float = 1e-2  # markpDiff: ptol = ptol_factor * hTol
    frac_ptol: float = 1.0
    extra_points: int = 2  # estimator quadrature: max_order + 1 + extra_points
    cadence: int = 1

    def __post_init__(self):
        if self.max_level < 0 or self.max_order < 1:
            raise ValueError("need max_level >= 0 and max_order >= 1")
        if self.p_strategy not in P_STRATEGIES:
            raise ValueError(f"unknown p-strategy {self.p_strategy!r}; choose from {P_STRATEGIES}")


class Estimator:
    """Evaluates eta_E^2 on a fixed space.

    Parameters are those of :class:`~dgtwophase.forms.Discretization`; the
    quadrature uses ``max_order + 1 + extra_points`` points per direction.
    """

    def __init__(self, space, model, beta=None, s_eval=0.5, extra_points=2):
        self.disc = Discretization(space, model, beta, s_eval, extra_points=extra_points,
                                   deriv=2)
        self.space = space
        self.model = model

    def _flux(self, c, K, gp, gs):
        g, rP = self.disc.g, self.model.rho_P
        v = (c.a_sp[..., None] * (gp - rP * g) + c.a_ss[..., None] * gs
             + c.b_s[..., None] * g)
        return np.einsum("...ab,...b->...a", K, v)

    def parts(self, u_new, u_old, tau):
        """Per-element volume part and per-face ``(minus, plus, weight, value)`` parts."""
        d = self.disc
        mesh = d.mesh
        a = u_new.coeffs if isinstance(u_new, DgFunction) else u_new
        b = u_old.coeffs if isinstance(u_old, DgFunction) else u_old
        vol = np.zeros(mesh.n_elements)
        g, rP = d.g, self.model.rho_P
        hE = mesh.diameter()
        for grp in d.vgroups:
            ip, is_ = grp["idx"]
            B, G, H, w = grp["B"], grp["G"], grp["H"], grp["w"]
            cp, cs = a[ip], a[is_]
            s = cs @ B.T
            s0 = b[is_] @ B.T
            gp = np.einsum("nqmd,nm->nqd", G, cp)
            gs = np.einsum("nqmd,nm->nqd", G, cs)
            Hp = np.einsum("nqmab,nm->nqab", H, cp)
            Hs = np.einsum("nqmab,nm->nqab", H, cs)
            c = self.model.scalars(s, grp["rock"])
            # d_a v_b for v = a_sp (grad p - rho_P g) + a_ss grad s + b_s g
            dv = (c.da_sp[..., None, None] * gs[..., :, None] * (gp - rP * g)[..., None, :]
                  + c.a_sp[..., None, None] * Hp
                  + c.da_ss[..., None, None] * gs[..., :, None] * gs[..., None, :]
                  + c.a_ss[..., None, None] * Hs
                  + c.db_s[..., None, None] * gs[..., :, None] * g[None, None, None, :])
            div = np.einsum("nqab,nqab->nq", grp["K"], dv)
            R = grp["q_s"] - grp["phi"] * (s - s0) / tau + div
            vol[grp["els"]] = hE[grp["els"]] ** 2 * np.sum(w * R * R, axis=1)
        faces = []
        for grp in d.igroups:
            mi, pl = grp["minus"], grp["plus"]
            flux, sv = [], []
            for side in (mi, pl):
                ip, is_ = side.idx
                s = np.einsum("fqm,fm->fq", side.B, a[is_])
                gp = np.einsum("fqmd,fm->fqd", side.G, a[ip])
                gs = np.einsum("fqmd,fm->fqd", side.G, a[is_])
                c = self.model.scalars(s, grp["rock"])
                flux.append(self._flux(c, grp["K"], gp, gs))
                sv.append(s)
            Re2 = np.einsum("fqd,fd->fq", flux[0] - flux[1], grp["nrm"])
            Re1 = grp["gam_s"] * (sv[0] - sv[1])  # gam_s already includes sigma
            he = grp["he"][:, None]
            val = np.sum(grp["w"] * (he * Re2 ** 2 + Re1 ** 2 / he), axis=1)
            faces.append((mi.els, pl.els, 0.5, val))
        for grp in d.bgroups:
            mi = grp["minus"]
            ip, is_ = mi.idx
            s = np.einsum("fqm,fm->fq", mi.B, a[is_])
            gp = np.einsum("fqmd,fm->fqd", mi.G, a[ip])
            gs = np.einsum("fqmd,fm->fqd", mi.G, a[is_])
            c = self.model.scalars(s, grp["rock"])
            F = self._flux(c, grp["K"], gp, gs)
            dir_s = grp["dir_s"]
            Re2 = (1.0 - dir_s) * (grp["J_n"] + np.einsum("fqd,fd->fq", F, grp["nrm"]))
            Re1 = dir_s * grp["gam_s"] * (grp["s_D"] - s)
            he = grp["he"][:, None]
            val = np.sum(grp["w"] * (he * Re2 ** 2 + Re1 ** 2 / he), axis=1)
            faces.append((mi.els, None, 1.0, val))
        return vol, faces

    def __call__(self, u_new, u_old, tau):
        """eta_E^2 for every element."""
        vol, faces = self.parts(u_new, u_old, tau)
        eta2 = vol.copy()
        for em, ep, wt, val in faces:
            np.add.at(eta2, em, wt * val)
            if ep is not None:
                np.add.at(eta2, ep, wt * val)
        return eta2

    def lower_order(self, u_new, u_old, tau, floor=0):
        """eta_E^2 of the L2 projection of ``u_new`` onto orders r_E - 1."""
        return self(truncate_orders(u_new, floor), u_old, tau)


def truncate_orders(u, floor=0):
    """Zero the top hierarchical shell of every element (projection onto Q_{r-1}).

    The result stays on the same space so it can reuse assembled quadrature.
    """
    v = u.copy()
    sp = u.space
    for r, els in sp.groups.items():
        keep = max(r - 1, floor)
        m_keep = (keep + 1) ** 2
        for f in range(sp.n_fields):
            idx = sp.dof_index(els, r, f)
            v.coeffs[idx[:, m_keep:]] = 0.0
    return v


def compute_estimator(space, model, u_new, u_old, tau, beta=None, s_eval=0.5, extra_points=2):
    """Convenience wrapper: eta_E^2 for one pair of time levels."""
    return Estimator(space, model, beta, s_eval, extra_points)(u_new, u_old, tau)


def compute_tolerances(eta2_initial, T, tau, n_elements):
    """(tTol, hTol) with tTol = sum(eta^2_0) / T and hTol = tTol * tau / N."""
    if T <= 0:
        raise ValueError("final time must be positive")
    ttol = float(np.sum(eta2_initial)) / T
    return ttol, ttol * tau / n_elements


def h_tolerance(ttol, tau, n_elements):
    return ttol * tau / n_elements


def mark_h(eta2, htol, levels, max_level, coarsen_factor=0.01):
    """Refine where eta^2 > hTol (below max level); coarsen below 0.01 hTol."""
    eta2 = np.asarray(eta2)
    levels = np.asarray(levels)
    marks = np.full(eta2.shape, KEEP, dtype=np.int64)
    marks[(eta2 > htol) & (levels < max_level)] = REFINE
    marks[(eta2 < coarsen_factor * htol) & (levels > 0)] = COARSEN
    return marks


def mark_p_diff(eta2_r, eta2_rm1, orders, ptol, max_order, min_order=1):
    """Decrease where |eta_r - eta_{r-1}| < ptol, increase above 100 ptol."""
    sig = np.abs(np.asarray(eta2_r) - np.asarray(eta2_rm1))
    orders = np.asarray(orders)
    new = orders.copy()
    dec = sig < ptol
    inc = sig > 100.0 * ptol
    new[dec] = np.maximum(orders[dec] - 1, min_order)
    new[inc] = np.minimum(orders[inc] + 1, max_order)
    return new


def mark_p_frac(eta2_r, eta2_rm1, orders, levels, max_level, max_order, ptol=1.0, min_order=1,
                plain=False):
    """Smoothness-ratio marking.

    Default (level-gated) semantics: below ``max_level`` the order is raised;
    on the finest level it is lowered where eta_r > ptol * eta_{r-1} and raised
    where eta_r < 0.01 ptol eta_{r-1}.  ``plain=True`` drops the level gate.
    A zero ``eta_{r-1}`` gives an infinite ratio unless ``eta_r`` is zero too
    (ratio taken as 1).
    """
    a = np.asarray(eta2_r, float)
    b = np.asarray(eta2_rm1, float)
    orders = np.asarray(orders)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(b > 0, a / np.where(b > 0, b, 1.0), np.where(a > 0, np.inf, 1.0))
    new = orders.copy()
    up = ratio < 0.01 * ptol
    down = ratio > ptol
    new[up] = np.minimum(orders[up] + 1, max_order)
    new[down] = np.maximum(orders[down] - 1, min_order)
    if not plain:
        coarse = np.asarray(levels) < max_level
        new[coarse] = np.minimum(orders[coarse] + 1, max_order)
    return new
