"""Interior-penalty DG residual and Jacobian assembly.

Spatial operator per equation: bulk - weighted-average consistency +
penalty, with Dirichlet data imposed weakly (consistency + penalty on
``u - u_D``) and prescribed Neumann fluxes added as loads.  Everything is
evaluated with numpy over groups of elements of equal order and groups of
faces with equal ``(order-, order+)``.
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .basis import gauss, gauss_square, n_modes, tabulate
from .dgspace import P, S

FIELD_NAMES = ("p", "s")


class AssemblyError(FloatingPointError):
    def __init__(self, msg, element=None):
        super().__init__(msg if element is None else f"{msg} (element {element})")
        self.element = element


class DegenerateFaceError(ValueError):
    pass


def weighted_average(q_minus, q_plus, k_minus, k_plus):
    """Permeability-weighted face average; pass ``q_plus=None`` on the boundary.

    Weights are ``k+/(k+ + k-)`` for the minus trace and ``k-/(k+ + k-)`` for
    the plus trace.
    """
    if q_plus is None:
        return np.asarray(q_minus)
    km, kp = np.asarray(k_minus, float), np.asarray(k_plus, float)
    tot = km + kp
    if np.any(tot <= 0):
        raise DegenerateFaceError("k- + k+ must be positive")
    wm, wp = kp / tot, km / tot
    if np.ndim(q_minus) > np.ndim(wm):
        wm, wp = wm[..., None], wp[..., None]
    return wm * q_minus + wp * q_plus


def harmonic_normal_perm(k_minus, k_plus):
    return 2.0 * k_minus * k_plus / (k_minus + k_plus)


def penalty_factors(delta_minus, delta_plus, k_minus, k_plus, face_length, area_minus,
                    area_plus=None):
    """gamma_e = max(delta+-) * 2 k+ k- / (k+ + k-) * |e| / min(|E+-|).

    On boundary faces (``area_plus=None``) this reduces to
    ``delta- * k- * |e| / |E-|``.
    """
    if area_plus is None:
        return delta_minus * k_minus * face_length / area_minus
    return (np.maximum(delta_minus, delta_plus) * harmonic_normal_perm(k_minus, k_plus)
            * face_length / np.minimum(area_minus, area_plus))


def default_beta(max_order):
    return float(max_order * (max_order + 1))


@dataclass
class AssembledSystem:
    residual: np.ndarray
    jacobian: Optional[sp.csr_matrix] = None

    def __iter__(self):
        return iter((self.residual, self.jacobian))


def face_points(mesh, faces, t):
    """Physical points (nF, q) on each face for reference abscissae ``t``."""
    nrm = mesh.face_normal[faces]
    mid = mesh.face_mid[faces]
    half = 0.5 * mesh.face_length[faces]
    vertical = np.abs(nrm[:, 0]) > 0.5
    x = mid[:, 0, None] + np.where(vertical, 0.0, half)[:, None] * t
    y = mid[:, 1, None] + np.where(vertical, half, 0.0)[:, None] * t
    return x, y


class _Side:
    """Basis data of one side of a face group."""

    def __init__(self, mesh, els, order, x, y, deriv):
        self.els = els
        self.order = order
        xi, eta = mesh.to_reference(els[:, None], np.stack([x, y], -1))
        tabs = tabulate(order, xi, eta, deriv=deriv)
        self.B = tabs[0]
        scale = np.stack([2.0 / mesh.dx[els], 2.0 / mesh.dy[els]], -1)  # (nF, 2)
        self.scale = scale
        if deriv >= 1:
            self.G = tabs[1] * scale[:, None, None, :]
        if deriv >= 2:
            self.H = tabs[2] * scale[:, None, None, :, None] * scale[:, None, None, None, :]


class Discretization:
    """Quadrature, geometry and coefficient data for one (mesh, orders) layout.

    Parameters
    ----------
    space : DgSpace
        Two-field space (p, s).
    model : ModelCoefficients
    beta : float, optional
        Penalty scaling sigma; defaults to r(r+1) with r the space's max order.
    s_eval : float
        Saturation at which the penalty weights are evaluated.
    extra_points : int
        Gauss points per direction beyond ``max_order + 1``.
    deriv : int
        Highest basis derivative tabulated (2 for the estimator).
    """

    def __init__(self, space, model, beta=None, s_eval=0.5, extra_points=1, deriv=1):
        self.space = space
        self.model = model
        self.setup = model.setup
        self.mesh = space.mesh
        self.beta = default_beta(space.max_order) if beta is None else float(beta)
        if self.beta <= 0:
            raise ValueError("penalty scaling must be positive")
        self.s_eval = s_eval
        self.nq = space.max_order + 1 + extra_points
        self.deriv = deriv
        self.g = model.gravity
        self._volume_groups()
        self._face_groups()
        self._pattern = None

    # ------------------------------------------------------------ set-up
    def _volume_groups(self):
        mesh, space = self.mesh, self.space
        pts, wts = gauss_square(self.nq)
        self.vgroups = []
        for r, els in space.groups.items():
            tabs = tabulate(r, pts[:, 0], pts[:, 1], deriv=self.deriv)
            scale = np.stack([2.0 / mesh.dx[els], 2.0 / mesh.dy[els]], -1)
            x = mesh.center[els, 0, None] + 0.5 * mesh.dx[els, None] * pts[:, 0]
            y = mesh.center[els, 1, None] + 0.5 * mesh.dy[els, None] * pts[:, 1]
            rock = self.setup.rock_at(x, y)
            q_p, q_s = self.model.sources(x, y)
            grp = dict(order=r, els=els, m=n_modes(r), B=tabs[0],
                       G=tabs[1][None] * scale[:, None, None, :],
                       w=wts[None, :] * (0.25 * mesh.area[els])[:, None],
                       x=x, y=y, rock=rock, K=rock.K, phi=rock.porosity,
                       q_p=np.broadcast_to(q_p, x.shape), q_s=np.broadcast_to(q_s, x.shape),
                       idx=(space.dof_index(els, r, P), space.dof_index(els, r, S)))
            if self.deriv >= 2:
                grp["H"] = (tabs[2][None] * scale[:, None, None, :, None]
                            * scale[:, None, None, None, :])
            self.vgroups.append(grp)

    def _face_groups(self):
        mesh, space, setup = self.mesh, self.space, self.setup
        t, wt = gauss(self.nq)
        fm, fp = mesh.face_minus, mesh.face_plus
        orders = space.orders
        self.igroups, self.bgroups = [], []
        inter = mesh.interior_faces
        keys = orders[fm[inter]] * 1000 + orders[fp[inter]]
        for key in np.unique(keys):
            faces = inter[keys == key]
            rm, rp = int(key // 1000), int(key % 1000)
            x, y = face_points(mesh, faces, t)
            nrm = mesh.face_normal[faces]
            rock = setup.rock_at(x, y)
            K = rock.K
            kn = np.einsum("fa,fqab,fb->fq", nrm, K, nrm)
            dp, ds = self.model.penalty_deltas(rock, self.s_eval)
            le = mesh.face_length[faces][:, None]
            am = mesh.area[fm[faces]][:, None]
            ap = mesh.area[fp[faces]][:, None]
            grp = dict(faces=faces, x=x, y=y, nrm=nrm, rock=rock, K=K,
                       w=wt[None, :] * 0.5 * le,
                       wm=kn / (kn + kn), wp=kn / (kn + kn),
                       gam_p=self.beta * penalty_factors(dp, dp, kn, kn, le, am, ap),
                       gam_s=self.beta * penalty_factors(ds, ds, kn, kn, le, am, ap),
                       minus=_Side(mesh, fm[faces], rm, x, y, self.deriv),
                       plus=_Side(mesh, fp[faces], rp, x, y, self.deriv),
                       he=0.5 * (am[:, 0] + ap[:, 0]) / le[:, 0])
            grp["minus"].idx = (space.dof_index(fm[faces], rm, P), space.dof_index(fm[faces], rm, S))
            grp["plus"].idx = (space.dof_index(fp[faces], rp, P), space.dof_index(fp[faces], rp, S))
            self.igroups.append(grp)
        bnd = mesh.boundary_faces
        bo = orders[fm[bnd]]
        for r in np.unique(bo):
            faces = bnd[bo == r]
            r = int(r)
            x, y = face_points(mesh, faces, t)
            nrm = mesh.face_normal[faces]
            mx, my = mesh.face_mid[faces, 0], mesh.face_mid[faces, 1]
            rock = setup.rock_at(x, y)
            K = rock.K
            kn = np.einsum("fa,fqab,fb->fq", nrm, K, nrm)
            dp, ds = self.model.penalty_deltas(rock, self.s_eval)
            le = mesh.face_length[faces][:, None]
            am = mesh.area[fm[faces]][:, None]
            J_n, J_w = setup.neumann_flux(x, y)
            grp = dict(faces=faces, x=x, y=y, nrm=nrm, rock=rock, K=K,
                       w=wt[None, :] * 0.5 * le,
                       dir_p=setup.is_dirichlet(mx, my, "p").astype(float)[:, None],
                       dir_s=setup.is_dirichlet(mx, my, "s").astype(float)[:, None],
                       p_D=self.model.dirichlet_pressure(x, y),
                       s_D=np.broadcast_to(np.asarray(setup.s_dirichlet(x, y), float), x.shape),
                       J_n=J_n, J_w=J_w,
                       gam_p=self.beta * penalty_factors(dp, None, kn, None, le, am),
                       gam_s=self.beta * penalty_factors(ds, None, kn, None, le, am),
                       minus=_Side(mesh, fm[faces], r, x, y, self.deriv),
                       he=am[:, 0] / le[:, 0])
            grp["minus"].idx = (space.dof_index(fm[faces], r, P), space.dof_index(fm[faces], r, S))
            self.bgroups.append(grp)

    # --------------------------------------------------------- evaluation
    @staticmethod
    def _values(c, B):
        return c @ B.T if B.ndim == 2 else np.einsum("fqm,fm->fq", B, c)

    @staticmethod
    def _grads(c, G):
        # G: (n, q, m, 2)
        return np.einsum("nqmd,nm->nqd", G, c)

    def _coeffs(self, sbar, rock):
        c = self.model.scalars(sbar, rock)
        if not np.all(np.isfinite(c.a_pp)):
            raise AssemblyError("non-finite coefficients")
        return c

    def _fluxes(self, c, K, gp, gs):
        """Pressure/saturation fluxes (before K) and their d/ds-bar."""
        g = self.g
        rP = self.model.rho_P
        vp = c.a_pp[..., None] * gp + c.a_ps[..., None] * gs + c.b_p[..., None] * g
        vs = (c.a_sp[..., None] * (gp - rP * g) + c.a_ss[..., None] * gs
              + c.b_s[..., None] * g)
        dvp = c.da_pp[..., None] * gp + c.da_ps[..., None] * gs + c.db_p[..., None] * g
        dvs = (c.da_sp[..., None] * (gp - rP * g) + c.da_ss[..., None] * gs
               + c.db_s[..., None] * g)
        Kv = lambda v: np.einsum("...ab,...b->...a", K, v)
        return Kv(vp), Kv(vs), Kv(dvp), Kv(dvs)

    def assemble(self, u, sbar=None, jacobian=True, sbar_is_u=False):
        """Spatial residual F(u; s-bar) and optionally dF/du.

        ``u`` and ``sbar`` are coefficient vectors on :attr:`space`.  With
        ``sbar_is_u`` the coefficients are evaluated at ``u`` and the Jacobian
        includes their derivative.
        """
        if sbar is None or sbar_is_u:
            sbar, sbar_is_u = u, True
        R = np.zeros(self.space.n_dofs)
        blocks = []

        # ---- volume terms
        for grp in self.vgroups:
            ip, is_ = grp["idx"]
            cp, cs, cb = u[ip], u[is_], sbar[is_]
            B, G, w = grp["B"], grp["G"], grp["w"]
            gp, gs = self._grads(cp, G), self._grads(cs, G)
            sb = cb @ B.T
            c = self._coeffs(sb, grp["rock"])
            bad = ~np.isfinite(c.a_ss).all(axis=1)
            if bad.any():
                raise AssemblyError("non-finite coefficients", int(grp["els"][np.argmax(bad)]))
            Fp, Fs, dFp, dFs = self._fluxes(c, grp["K"], gp, gs)
            rp = np.einsum("nqd,nqmd->nm", w[..., None] * Fp, G) - (w * grp["q_p"]) @ B
            rs = np.einsum("nqd,nqmd->nm", w[..., None] * Fs, G) - (w * grp["q_s"]) @ B
            np.add.at(R, ip, rp)
            np.add.at(R, is_, rs)
            if not jacobian:
                continue
            KG = np.einsum("nqab,nqmb->nqma", grp["K"], G)
            Gw = G * w[..., None, None]
            n, q, m, _ = G.shape
            Gw2 = Gw.transpose(0, 2, 1, 3).reshape(n, m, q * 2)

            def stiff(coef):
                KGc = (KG * coef[..., None, None]).transpose(0, 1, 3, 2).reshape(n, q * 2, m)
                return Gw2 @ KGc

            App, Aps, Asp, Ass = stiff(c.a_pp), stiff(c.a_ps), stiff(c.a_sp), stiff(c.a_ss)
            if sbar_is_u:
                Tp = np.einsum("nqmd,nqd->nmq", Gw, dFp)
                Ts = np.einsum("nqmd,nqd->nmq", Gw, dFs)
                Aps = Aps + Tp @ B
                Ass = Ass + Ts @ B
            blocks += [(ip, ip, App), (ip, is_, Aps), (is_, ip, Asp), (is_, is_, Ass)]

        # ---- interior faces
        for grp in self.igroups:
            mi, pl = grp["minus"], grp["plus"]
            w, nrm = grp["w"], grp["nrm"]
            vals = {}
            for side in (mi, pl):
                ip, is_ = side.idx
                cp, cs, cb = u[ip], u[is_], sbar[is_]
                pv, sv = self._values(cp, side.B), self._values(cs, side.B)
                gp, gs = self._grads(cp, side.G), self._grads(cs, side.G)
                sb = self._values(cb, side.B)
                c = self._coeffs(sb, grp["rock"])
                Fp, Fs, dFp, dFs = self._fluxes(c, grp["K"], gp, gs)
                vals[side is mi] = (pv, sv, c, Fp, Fs, dFp, dFs)
            pm, sm, cm, Fpm, Fsm, dFpm, dFsm = vals[True]
            pp_, spl, cpl, Fpp, Fsp, dFpp, dFsp = vals[False]
            wm, wp = grp["wm"], grp["wp"]
            Fn_p = np.einsum("fqd,fd->fq", wm[..., None] * Fpm + wp[..., None] * Fpp, nrm)
            Fn_s = np.einsum("fqd,fd->fq", wm[..., None] * Fsm + wp[..., None] * Fsp, nrm)
            g_p = -Fn_p + grp["gam_p"] * (pm - pp_)
            g_s = -Fn_s + grp["gam_s"] * (sm - spl)
            for side, sgn in ((mi, 1.0), (pl, -1.0)):
                ip, is_ = side.idx
                np.add.at(R, ip, sgn * np.einsum("fq,fqm->fm", w * g_p, side.B))
                np.add.at(R, is_, sgn * np.einsum("fq,fqm->fm", w * g_s, side.B))
            if not jacobian:
                continue
            K = grp["K"]
            Kn = np.einsum("fqab,fb->fqa", K, nrm)
            trial = {}
            for side, om, c, dFp, dFs, psgn in ((mi, wm, cm, dFpm, dFsm, 1.0),
                                                (pl, wp, cpl, dFpp, dFsp, -1.0)):
                nKg = np.einsum("fqmd,fqd->fqm", side.G, Kn)
                Bq = side.B
                d_pp = -om[..., None] * c.a_pp[..., None] * nKg + psgn * grp["gam_p"][..., None] * Bq
                d_ps = -om[..., None] * c.a_ps[..., None] * nKg
                d_sp = -om[..., None] * c.a_sp[..., None] * nKg
                d_ss = -om[..., None] * c.a_ss[..., None] * nKg + psgn * grp["gam_s"][..., None] * Bq
                if sbar_is_u:
                    d_ps = d_ps - (om * np.einsum("fqd,fd->fq", dFp, nrm))[..., None] * Bq
                    d_ss = d_ss - (om * np.einsum("fqd,fd->fq", dFs, nrm))[..., None] * Bq
                trial[side is mi] = (side, d_pp, d_ps, d_sp, d_ss)
            for test, tsgn in ((mi, 1.0), (pl, -1.0)):
                Bt = (tsgn * w[..., None] * test.B).transpose(0, 2, 1)
                tp, ts = test.idx
                for key in (True, False):
                    side, d_pp, d_ps, d_sp, d_ss = trial[key]
                    jp, js = side.idx
                    blocks += [(tp, jp, Bt @ d_pp), (tp, js, Bt @ d_ps),
                               (ts, jp, Bt @ d_sp), (ts, js, Bt @ d_ss)]

        # ---- boundary faces
        for grp in self.bgroups:
            mi = grp["minus"]
            w, nrm = grp["w"], grp["nrm"]
            ip, is_ = mi.idx
            cp, cs, cb = u[ip], u[is_], sbar[is_]
            pv, sv = self._values(cp, mi.B), self._values(cs, mi.B)
            gp, gs = self._grads(cp, mi.G), self._grads(cs, mi.G)
            c = self._coeffs(self._values(cb, mi.B), grp["rock"])
            Fp, Fs, dFp, dFs = self._fluxes(c, grp["K"], gp, gs)
            dp_, ds_ = grp["dir_p"], grp["dir_s"]
            g_p = (dp_ * (-np.einsum("fqd,fd->fq", Fp, nrm) + grp["gam_p"] * (pv - grp["p_D"]))
                   + (1.0 - dp_) * (grp["J_n"] + grp["J_w"]))
            g_s = (ds_ * (-np.einsum("fqd,fd->fq", Fs, nrm) + grp["gam_s"] * (sv - grp["s_D"]))
                   + (1.0 - ds_) * grp["J_n"])
            np.add.at(R, ip, np.einsum("fq,fqm->fm", w * g_p, mi.B))
            np.add.at(R, is_, np.einsum("fq,fqm->fm", w * g_s, mi.B))
            if not jacobian:
                continue
            Kn = np.einsum("fqab,fb->fqa", grp["K"], nrm)
            nKg = np.einsum("fqmd,fqd->fqm", mi.G, Kn)
            Bq = mi.B
            d_pp = dp_[..., None] * (-c.a_pp[..., None] * nKg + grp["gam_p"][..., None] * Bq)
            d_ps = dp_[..., None] * (-c.a_ps[..., None] * nKg)
            d_sp = ds_[..., None] * (-c.a_sp[..., None] * nKg)
            d_ss = ds_[..., None] * (-c.a_ss[..., None] * nKg + grp["gam_s"][..., None] * Bq)
            if sbar_is_u:
                d_ps = d_ps - (dp_ * np.einsum("fqd,fd->fq", dFp, nrm))[..., None] * Bq
                d_ss = d_ss - (ds_ * np.einsum("fqd,fd->fq", dFs, nrm))[..., None] * Bq
            Bt = (w[..., None] * Bq).transpose(0, 2, 1)
            blocks += [(ip, ip, Bt @ d_pp), (ip, is_, Bt @ d_ps),
                       (is_, ip, Bt @ d_sp), (is_, is_, Bt @ d_ss)]

        if not np.all(np.isfinite(R)):
            raise AssemblyError("non-finite residual")
        if not jacobian:
            return AssembledSystem(R)
        return AssembledSystem(R, self._to_csr(blocks))

    # -------------------------------------------------------- sparse utils
    def _to_csr(self, blocks):
        data = np.concatenate([b[2].ravel() for b in blocks])
        if self._pattern is None:
            rows = np.concatenate([np.broadcast_to(b[0][:, :, None], b[2].shape).ravel()
                                   for b in blocks])
            cols = np.concatenate([np.broadcast_to(b[1][:, None, :], b[2].shape).ravel()
                                   for b in blocks])
            n = self.space.n_dofs
            keys = rows * n + cols
            uniq, inv = np.unique(keys, return_inverse=True)
            r, c = np.divmod(uniq, n)
            indptr = np.concatenate([[0], np.cumsum(np.bincount(r, minlength=n))])
            self._pattern = (inv, c, indptr, len(uniq))
        inv, cols, indptr, nnz = self._pattern
        vals = np.bincount(inv, weights=data, minlength=nnz)
        n = self.space.n_dofs
        return sp.csr_matrix((vals, cols.copy(), indptr.copy()), shape=(n, n))

    def mass_phi(self):
        """Block-diagonal matrix of int Phi phi_i phi_j on the saturation blocks."""
        if getattr(self, "_mass", None) is None:
            blocks = []
            for grp in self.vgroups:
                B, w = grp["B"], grp["w"] * grp["phi"]
                M = np.einsum("nq,qi,qj->nij", w, B, B)
                blocks.append((grp["idx"][1], grp["idx"][1], M))
            rows = np.concatenate([np.broadcast_to(b[0][:, :, None], b[2].shape).ravel() for b in blocks])
            cols = np.concatenate([np.broadcast_to(b[1][:, None, :], b[2].shape).ravel() for b in blocks])
            data = np.concatenate([b[2].ravel() for b in blocks])
            n = self.space.n_dofs
            self._mass = sp.csr_matrix((data, (rows, cols)), shape=(n, n))
        return self._mass


class TimeForm:
    """Time-discrete system for one step.

    Pressure rows:    F_p(u; s-bar)
    Saturation rows:  M_Phi (s - s_old) + tau (alpha F_s(u; s-bar) + (1 - alpha) F_s(u_old; s_old))
    """

    def __init__(self, disc, u_old, tau, alpha=1.0):
        self.disc = disc
        self.u_old = np.asarray(u_old, float)
        self.tau = float(tau)
        self.alpha = float(alpha)
        sp_ = disc.space
        self.s_rows = sp_.field_slices[S]
        self.p_rows = sp_.field_slices[P]
        scale = np.ones(sp_.n_dofs)
        scale[self.s_rows] = self.tau * self.alpha
        self.row_scale = scale
        self.M = disc.mass_phi()
        self.old_part = np.zeros(sp_.n_dofs)
        if self.alpha < 1.0:
            F_old = disc.assemble(self.u_old, self.u_old, jacobian=False).residual
            self.old_part[self.s_rows] = self.tau * (1.0 - self.alpha) * F_old[self.s_rows]

    def __call__(self, u, sbar=None, jacobian=True, sbar_is_u=False):
        sysm = self.disc.assemble(u, sbar, jacobian, sbar_is_u)
        R = self.row_scale * sysm.residual + self.M @ (u - self.u_old) + self.old_part
        if not jacobian:
            return AssembledSystem(R)
        J = sp.diags(self.row_scale) @ sysm.jacobian + self.M
        return AssembledSystem(R, J.tocsr())


def assemble_residual(disc, u, u_old, s_bar, tau, alpha=1.0, which="coupled", sbar_is_u=False):
    """Residual and Jacobian of the time-discrete system restricted to ``which``.

    ``which`` is ``"coupled"``, ``"pressure_only"`` (pressure rows/columns)
    or ``"saturation_only"`` (saturation rows/columns).
    """
    tf = TimeForm(disc, u_old, tau, alpha)
    full = tf(u, s_bar, True, sbar_is_u)
    if which == "coupled":
        return full
    rows = tf.p_rows if which == "pressure_only" else tf.s_rows
    return AssembledSystem(full.residual[rows], full.jacobian[rows][:, rows])
