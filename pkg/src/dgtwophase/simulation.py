"""Time loop: step -> limit -> estimate -> adapt (h, then p) -> transfer -> output."""
import logging
import os
import time
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .adapt import (AdaptConfig, Estimator, h_tolerance, mark_h, mark_p_diff, mark_p_frac)
from .config import RunConfig
from .dgspace import P, S, DgSpace, change_orders, l2_project_analytic, transfer_on_adapt
from .forms import Discretization
from .limiter import LimiterConfig, apply_scaling_limiter, value_range
from .mesh import KEEP, build_macro
from .output import DiagnosticsWriter, line_sample, write_vtk
from .physics import MODELS, PRESETS
from .solver import NewtonConfig
from .stepper import SchemeConfig, StepFailure, TimeState, advance

log = logging.getLogger(__name__)


@dataclass
class RunResult:
    status: str  # "ok" or "failed"
    t: float
    steps: int
    u: object
    history: list = field(default_factory=list)
    initial_dofs: int = 0
    failure: Optional[StepFailure] = None
    s_range: tuple = (np.inf, -np.inf)
    max_elements: int = 0
    wall: float = 0.0
    ttol: float = 0.0

    @property
    def ok(self):
        return self.status == "ok"


class Simulation:
    """One configured run; see :class:`~dgtwophase.config.RunConfig`."""

    def __init__(self, cfg: RunConfig, setup=None, model=None):
        self.cfg = cfg
        if setup is None:
            setup = PRESETS[cfg.preset](cutoff=cfg.cutoff, macro=(cfg.macro_nx, cfg.macro_ny))
        if cfg.T is not None:
            setup = replace(setup, T=cfg.T)
        if cfg.K_lens is not None:
            k = cfg.K_lens
            setup = replace(setup, rock_lens=replace(setup.rock_lens, K=((k, 0.0), (0.0, k))))
        if cfg.J_n is not None:
            setup = replace(setup, J_n=cfg.J_n)
        self.setup = setup
        self.model = model or MODELS[cfg.model](setup)
        self.T = setup.T
        self.scheme = SchemeConfig(
            kind=cfg.scheme, tau=cfg.tau, alpha=cfg.alpha, tol_iter=cfg.tol_iter,
            max_outer=cfg.max_outer, limit_each_newton=cfg.limit_each_newton,
            newton=NewtonConfig(cfg.newton_atol, cfg.newton_rtol, cfg.newton_max_iter),
            limiter=LimiterConfig(cfg.s_min, cfg.s_max, enabled=cfg.limiter))
        self.adapt_cfg = AdaptConfig(
            max_level=cfg.max_level, max_order=cfg.max_order, min_order=cfg.min_order,
            p_strategy=cfg.p_strategy, initial_htol=cfg.initial_htol,
            initial_passes=cfg.initial_passes, ptol_factor=cfg.ptol_factor,
            frac_ptol=cfg.frac_ptol, cadence=cfg.adapt_every)
        self._disc = None
        self._est = None

    # ------------------------------------------------------------ helpers
    def discretization(self, space):
        if self._disc is None or self._disc.space is not space:
            self._disc = Discretization(space, self.model, self.cfg.beta, self.cfg.s_eval)
        return self._disc

    def estimator(self, space):
        if self._est is None or self._est.space is not space:
            self._est = Estimator(space, self.model, self.cfg.beta, self.cfg.s_eval)
        return self._est

    def project_initial(self, mesh, orders):
        space = DgSpace(mesh, orders, self.cfg.max_order)
        u = l2_project_analytic(space, self.model.initial_pressure, field=P)
        l2_project_analytic(space, self.setup.s_init, field=S, out=u)
        return apply_scaling_limiter(u, self.scheme.limiter)

    def _limit(self, u):
        return apply_scaling_limiter(u, self.scheme.limiter)

    def _p_orders(self, est, u, u_old, tau, htol, eta2=None):
        ac = self.adapt_cfg
        orders = u.space.orders
        if eta2 is None:
            eta2 = est(u, u_old, tau)
        lo = est.lower_order(u, u_old, tau)
        if ac.p_strategy == "diff":
            return mark_p_diff(eta2, lo, orders, ac.ptol_factor * htol, ac.max_order, ac.min_order)
        return mark_p_frac(eta2, lo, orders, u.space.mesh.level, ac.max_level, ac.max_order,
                           ac.frac_ptol, ac.min_order, plain=ac.p_strategy == "frac_plain")

    def adapt(self, u, u_old, tau, htol, eta2=None):
        """h- then p-adapt ``u``; ``u_old`` is carried along for the time residual.

        Returns ``(u, eta2)`` where ``eta2`` is the indicator on the input mesh.
        """
        ac = self.adapt_cfg
        est = self.estimator(u.space)
        eta2 = est(u, u_old, tau) if eta2 is None else eta2
        eta2_in = eta2
        if self.cfg.h_adapt:
            mesh = u.space.mesh
            marks = mark_h(eta2, htol, mesh.level, ac.max_level, ac.coarsen_factor)
            if np.any(marks != KEEP):
                new_mesh, rep = mesh.execute_marks(marks)
                if rep.changed:
                    u = transfer_on_adapt(u, new_mesh, rep)
                    u_old = transfer_on_adapt(u_old, new_mesh, rep)
                    u_old.space = u.space
                    htol = htol * mesh.n_elements / new_mesh.n_elements
                    est = self.estimator(u.space)
                    eta2 = None
        if ac.p_strategy != "off":
            orders = self._p_orders(est, u, u_old, tau, htol, eta2)
            if not np.array_equal(orders, u.space.orders):
                u = change_orders(u, orders)
        return self._limit(u), eta2_in

    # ---------------------------------------------------------- workflow
    def initial_condition(self):
        """Projected initial data after the initial adaptation passes."""
        cfg, ac = self.cfg, self.adapt_cfg
        mesh = build_macro(self.setup.macro[0], self.setup.macro[1], self.setup.extent,
                           ac.max_level)
        order0 = cfg.initial_order or cfg.max_order
        u = self.project_initial(mesh, order0)
        for _ in range(ac.initial_passes if cfg.h_adapt or ac.p_strategy != "off" else 0):
            old_mesh, old_orders = u.space.mesh, u.space.orders
            v, _ = self.adapt(u, u, cfg.tau, ac.initial_htol)
            u = self.project_initial(v.space.mesh, v.space.orders)
            if v.space.mesh is old_mesh and np.array_equal(v.space.orders, old_orders):
                break
        return u

    def run(self, output_dir=None, quiet=True):
        cfg = self.cfg
        out = output_dir or cfg.output_dir
        if out:
            os.makedirs(out, exist_ok=True)
        t0 = time.perf_counter()
        u = self.initial_condition()
        tau = cfg.tau
        eta2_0 = self.estimator(u.space)(u, u, tau)
        ttol = float(np.sum(eta2_0)) / self.T if self.T > 0 else 0.0
        res = RunResult("ok", 0.0, 0, u, initial_dofs=u.space.n_dofs, ttol=ttol,
                        max_elements=u.space.n_elements)
        diag_w = DiagnosticsWriter(os.path.join(out, "diagnostics.csv")) if out else None
        lo, hi = value_range(u)
        res.s_range = (lo, hi)
        row = self._row(0.0, u, float(np.sum(eta2_0)), None, lo, hi, t0)
        res.history.append(row)
        if diag_w:
            diag_w.row(**row)
        if out:
            self._snapshot(out, 0, 0.0, u, eta2_0)
        pending = sorted(t for t in cfg.output_times if 0 < t <= self.T + 1e-9)
        state = TimeState(0.0, 0, u)
        eps = 1e-9 * tau
        try:
            while state.t < self.T - eps:
                step_tau = min(tau, self.T - state.t)
                scheme = self.scheme if step_tau == tau else replace(self.scheme, tau=step_tau)
                disc = self.discretization(state.u.space)
                new, d = advance(state, scheme, disc)
                lo, hi = value_range(new.u)
                res.s_range = (min(res.s_range[0], lo), max(res.s_range[1], hi))
                u_new = new.u
                est = self.estimator(u_new.space)
                eta2 = est(u_new, state.u, step_tau)
                if new.step % self.adapt_cfg.cadence == 0 and (cfg.h_adapt or
                                                              self.adapt_cfg.p_strategy != "off"):
                    htol = h_tolerance(ttol, step_tau, u_new.space.n_elements)
                    u_new, _ = self.adapt(u_new, state.u, step_tau, htol, eta2)
                state = TimeState(new.t, new.step, u_new)
                row = self._row(new.t, u_new, float(np.sum(eta2)), d, lo, hi, t0)
                res.history.append(row)
                res.max_elements = max(res.max_elements, u_new.space.n_elements)
                if diag_w:
                    diag_w.row(**row)
                if not quiet:
                    print(f"t={new.t:8.2f} elements={row['elements']:5d} dofs={row['dofs']:6d} "
                          f"newton={d.newton_iters} outer={d.outer_iters} "
                          f"s=[{lo:.3g}, {hi:.3g}] wall={row['wall_s']:.1f}s", flush=True)
                due = pending and new.t >= pending[0] - eps
                while pending and new.t >= pending[0] - eps:
                    pending.pop(0)
                if out and (due or new.step % cfg.output_every == 0 or new.t >= self.T - eps):
                    self._snapshot(out, new.step, new.t, u_new, eta2)
        except StepFailure as err:
            log.error("%s", err)
            res.status, res.failure = "failed", err
        finally:
            if diag_w:
                diag_w.close()
        res.t, res.steps, res.u = state.t, state.step, state.u
        res.wall = time.perf_counter() - t0
        if out:
            self._summary(out, res)
        return res

    # ----------------------------------------------------------- outputs
    def _row(self, t, u, sum_eta2, d, lo, hi, t0):
        sp = u.space
        counts = np.bincount(sp.orders, minlength=4)
        return dict(t=float(t), scheme=self.cfg.scheme, dofs=sp.n_dofs, elements=sp.n_elements, sum_eta2=sum_eta2,
                    outer_iters=d.outer_iters if d else 0, newton_iters=d.newton_iters if d else 0,
                    linear_solves=d.linear_solves if d else 0, n_limited=d.n_limited if d else 0,
                    min_level=int(sp.mesh.level.min()), max_level=int(sp.mesh.level.max()),
                    n_order1=int(counts[1]), n_order2=int(counts[2]), n_order3=int(counts[3]),
                    s_min=float(lo), s_max=float(hi), wall_s=time.perf_counter() - t0)

    def _snapshot(self, out, step, t, u, eta2):
        line_sample(u, self.cfg.line_points).write_csv(os.path.join(out, f"line_t{t:09.3f}.csv"))
        if self.cfg.vtk:
            write_vtk(os.path.join(out, f"snapshot_{step:05d}.vtk"), u, eta2,
                      title=f"{self.setup.name} t={t:g}")

    def _summary(self, out, res):
        line = line_sample(res.u, self.cfg.line_points)
        hist = res.history
        vals = dict(
            status=res.status, preset=self.setup.name, model=self.cfg.model,
            scheme=self.cfg.scheme, tau=self.cfg.tau, T=self.T, t_final=res.t, steps=res.steps,
            initial_dofs=res.initial_dofs, final_dofs=res.u.space.n_dofs,
            final_elements=res.u.space.n_elements, max_elements=res.max_elements,
            max_dofs=max(h["dofs"] for h in hist), s_min=res.s_range[0], s_max=res.s_range[1],
            total_newton=sum(h["newton_iters"] for h in hist),
            total_outer=sum(h["outer_iters"] for h in hist),
            front_position=line.front_position(), wall_s=res.wall,
            failure=str(res.failure) if res.failure else "")
        with open(os.path.join(out, "summary.txt"), "w") as fh:
            for k, v in vals.items():
                fh.write(f"{k} = {v:.10g}\n" if isinstance(v, float) else f"{k} = {v}\n")
