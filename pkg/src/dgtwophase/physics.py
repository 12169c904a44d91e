"""Constitutive laws, model coefficients and the lens benchmark setups.

Both two-phase models used here write every tensor coefficient as a scalar
function of the saturation times the permeability tensor K, so the models
only hand out scalar multipliers (and their saturation derivatives):

    pressure flux    F_p = K (a_pp grad p + a_ps grad s + b_p g)
    saturation flux  F_s = K (a_sp (grad p - rho_P g) + a_ss grad s + b_s g)

with P_g = rho_P g.  The tensor-valued evaluators A_pp(s), G_p(s), ... are
available from :class:`ModelCoefficients` for inspection and tests.
"""
from dataclasses import dataclass, replace
from typing import Callable, NamedTuple, Optional

import numpy as np

from .kernels import brooks_corey_kernel

GRAVITY = 9.810
CUTOFF_EPS = 1e-5


class ConfigurationError(ValueError):
    pass


class DomainError(ArithmeticError):
    """Saturation left the domain of the capillary pressure law."""


@dataclass(frozen=True)
class FluidParams:
    rho_w: float = 1000.0
    rho_n: float = 1460.0
    mu_w: float = 1e-3
    mu_n: float = 9e-4
    g: tuple = (0.0, -GRAVITY)

    def __post_init__(self):
        if min(self.rho_w, self.rho_n, self.mu_w, self.mu_n) <= 0:
            raise ConfigurationError("densities and viscosities must be positive")


@dataclass(frozen=True)
class RockParams:
    porosity: float
    s_wr: float
    s_nr: float
    theta: float
    p_d: float
    K: tuple  # ((Kxx, Kxy), (Kxy, Kyy)) [m^2]

    def __post_init__(self):
        if not (0.0 <= self.s_wr + self.s_nr < 1.0):
            raise ConfigurationError("residual saturations must satisfy 0 <= s_wr + s_nr < 1")
        if self.theta <= 0 or self.p_d < 0:
            raise ConfigurationError("need theta > 0 and p_d >= 0")
        K = np.asarray(self.K, dtype=float)
        if K.shape != (2, 2) or abs(K[0, 1] - K[1, 0]) > 1e-14 * abs(K).max():
            raise ConfigurationError("permeability must be a symmetric 2x2 tensor")
        if np.linalg.eigvalsh(K).min() <= 0:
            raise ConfigurationError("permeability must be positive definite")


class CapillaryOutputs(NamedTuple):
    p_c: np.ndarray
    dp_c: np.ndarray
    lam_n: np.ndarray
    lam_w: np.ndarray
    d2p_c: np.ndarray
    dlam_n: np.ndarray
    dlam_w: np.ndarray


def _check_domain(p_c, cutoff):
    if not cutoff and not np.all(np.isfinite(p_c)):
        raise DomainError("effective wetting saturation <= 0; saturation needs limiting")


def brooks_corey(rock, fluids, s_n, cutoff=False, eps=CUTOFF_EPS):
    """Capillary pressure, its derivative and both mobilities at ``s_n``.

    ``rock`` is a :class:`RockParams` or a :class:`RockField` sample with
    array-valued parameters.
    """
    p_c, dp_c, d2p_c, lam_n, lam_w, dlam_n, dlam_w = brooks_corey_kernel(
        s_n, rock.s_wr, rock.s_nr, rock.theta, rock.p_d, fluids.mu_n, fluids.mu_w,
        cutoff, eps)
    _check_domain(p_c, cutoff)
    return CapillaryOutputs(p_c, dp_c, lam_n, lam_w, d2p_c, dlam_n, dlam_w)


class RockField(NamedTuple):
    """Rock parameters sampled at a set of points (arrays of equal shape)."""
    porosity: np.ndarray
    s_wr: np.ndarray
    s_nr: np.ndarray
    theta: np.ndarray
    p_d: np.ndarray
    Kxx: np.ndarray
    Kxy: np.ndarray
    Kyy: np.ndarray

    @property
    def K(self):
        return np.stack([np.stack([self.Kxx, self.Kxy], -1),
                         np.stack([self.Kxy, self.Kyy], -1)], -2)


def _zero(x, y):
    return np.zeros(np.broadcast(x, y).shape)


def _hydrostatic(x, y):
    return (0.65 - y) * 9810.0 + 0.0 * x


def _lens_box(x, y):
    return (np.abs(y - 0.49) < 0.03) & (np.abs(x - 0.45) < 0.11)


def _inflow_strip(x, y):
    return (np.abs(x - 0.45) < 0.06) & (np.abs(y - 0.65) < 1e-8)


def _east_west(x, y):
    return (np.abs(x) < 1e-8) | (np.abs(x - 0.9) < 1e-8)


@dataclass
class ProblemSetup:
    """Geometry, materials, initial and boundary data of a simulation.

    The point-wise callables take coordinate arrays ``(x, y)``.  Boundary
    faces are classified at their midpoints: ``dirichlet`` selects Dirichlet
    faces, every other boundary face is Neumann with flux ``(J_n, J_w)`` where
    ``inflow`` holds and zero flux elsewhere.  ``dirichlet_s`` can give the
    saturation equation its own Dirichlet set.
    """
    name: str
    fluids: FluidParams
    rock_lens: RockParams
    rock_outer: RockParams
    lens: Callable = _lens_box
    extent: tuple = (0.9, 0.65)
    macro: tuple = (10, 6)
    p_init: Callable = _hydrostatic
    s_init: Callable = _zero
    dirichlet: Callable = _east_west
    dirichlet_s: Optional[Callable] = None
    p_dirichlet: Callable = _hydrostatic
    s_dirichlet: Callable = _zero
    inflow: Callable = _inflow_strip
    J_n: float = -5.137e-5
    J_w: float = 0.0
    q_n: Callable = _zero
    q_w: Callable = _zero
    T: float = 800.0
    cutoff: bool = False
    cutoff_eps: float = CUTOFF_EPS

    def rock_at(self, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        inside = np.asarray(self.lens(x, y), dtype=bool)
        a, b = self.rock_lens, self.rock_outer

        def pick(u, v):
            return np.where(inside, u, v).astype(float)

        return RockField(pick(a.porosity, b.porosity), pick(a.s_wr, b.s_wr),
                         pick(a.s_nr, b.s_nr), pick(a.theta, b.theta), pick(a.p_d, b.p_d),
                         pick(a.K[0][0], b.K[0][0]), pick(a.K[0][1], b.K[0][1]),
                         pick(a.K[1][1], b.K[1][1]))

    def is_dirichlet(self, x, y, equation="p"):
        f = self.dirichlet_s if (equation == "s" and self.dirichlet_s is not None) else self.dirichlet
        return np.asarray(f(x, y), dtype=bool)

    def neumann_flux(self, x, y):
        """(J_n, J_w) prescribed normal fluxes at boundary points."""
        on = np.asarray(self.inflow(x, y), dtype=bool)
        return np.where(on, self.J_n, 0.0), np.where(on, self.J_w, 0.0)

    def validate(self):
        W, H = self.extent
        t = np.linspace(0.0, 1.0, 257)
        edges = [(0 * t, t * H), (W + 0 * t, t * H), (t * W, 0 * t), (t * W, H + 0 * t)]
        if not any(self.is_dirichlet(x, y).any() for x, y in edges):
            raise ConfigurationError("pressure needs a non-empty Dirichlet boundary")
        return self


def anisotropic_lens_setup(**overrides):
    """DNAPL infiltration into a container with an anisotropic sand and a lens."""
    setup = ProblemSetup(
        name="anisotropic_lens",
        fluids=FluidParams(),
        rock_lens=RockParams(0.39, 0.10, 0.0, 2.0, 5000.0, ((6.64e-14, 0.0), (0.0, 6.64e-14))),
        rock_outer=RockParams(0.40, 0.12, 0.0, 2.7, 755.0, ((1e-10, -5e-11), (-5e-11, 1e-10))),
        T=800.0,
    )
    return replace(setup, **overrides).validate()


def isotropic_weak_lens_setup(**overrides):
    """Same container with isotropic permeabilities and a weaker lens."""
    setup = anisotropic_lens_setup()
    setup = replace(setup, name="isotropic_weak_lens",
                    rock_lens=replace(setup.rock_lens, K=((1e-12, 0.0), (0.0, 1e-12))),
                    rock_outer=replace(setup.rock_outer, K=((1e-10, 0.0), (0.0, 1e-10))),
                    T=3200.0)
    return replace(setup, **overrides).validate()


PRESETS = {
    "anisotropic_lens": anisotropic_lens_setup,
    "isotropic_weak_lens": isotropic_weak_lens_setup,
}


# --------------------------------------------------------------------------
# models
# --------------------------------------------------------------------------
class Coefficients(NamedTuple):
    """Scalar multipliers of K at a set of points, with d/ds derivatives."""
    a_pp: np.ndarray
    a_ps: np.ndarray
    a_sp: np.ndarray
    a_ss: np.ndarray
    b_p: np.ndarray
    b_s: np.ndarray
    da_pp: np.ndarray
    da_ps: np.ndarray
    da_sp: np.ndarray
    da_ss: np.ndarray
    db_p: np.ndarray
    db_s: np.ndarray


@dataclass
class ModelCoefficients:
    """General two-equation model: pressure p and saturation s.

    Subclasses implement :meth:`scalars`.  ``rho_P`` is the density in
    P_g = rho_P g; the pressure unknown may be shifted against p_w through
    :meth:`pressure_shift` (Model B).
    """
    setup: ProblemSetup
    name: str = "generic"

    @property
    def fluids(self):
        return self.setup.fluids

    @property
    def gravity(self):
        return np.asarray(self.setup.fluids.g, dtype=float)

    @property
    def rho_P(self):
        return self.setup.fluids.rho_n

    def capillary(self, s, rock):
        return brooks_corey(rock, self.fluids, s, self.setup.cutoff, self.setup.cutoff_eps)

    def scalars(self, s, rock):
        raise NotImplementedError

    def penalty_deltas(self, rock, s_eval=0.5):
        """(delta_p, delta_s): penalty weights from the coefficients at s_eval."""
        c = self.scalars(np.full(np.shape(rock.porosity), s_eval), rock)
        return c.a_pp, c.a_ss

    def pressure_shift(self, s, rock):
        return np.zeros(np.shape(s))

    def initial_pressure(self, x, y):
        rock = self.setup.rock_at(x, y)
        return self.setup.p_init(x, y) + self.pressure_shift(self.setup.s_init(x, y), rock)

    def dirichlet_pressure(self, x, y):
        rock = self.setup.rock_at(x, y)
        return self.setup.p_dirichlet(x, y) + self.pressure_shift(self.setup.s_dirichlet(x, y), rock)

    def sources(self, x, y):
        """(q_p, q_s) at points."""
        qn = np.asarray(self.setup.q_n(x, y), dtype=float)
        qw = np.asarray(self.setup.q_w(x, y), dtype=float)
        return qn + qw, qn

    # tensor-valued views ---------------------------------------------------
    def _tensor(self, field_name, s, x, y):
        rock = self.setup.rock_at(x, y)
        c = self.scalars(np.asarray(s, float) + 0 * rock.porosity, rock)
        return getattr(c, field_name)[..., None, None] * rock.K

    def A_pp(self, s, x, y):
        return self._tensor("a_pp", s, x, y)

    def A_ps(self, s, x, y):
        return self._tensor("a_ps", s, x, y)

    def A_sp(self, s, x, y):
        return self._tensor("a_sp", s, x, y)

    def A_ss(self, s, x, y):
        return self._tensor("a_ss", s, x, y)

    def G_p(self, s, x, y):
        return self._tensor("b_p", s, x, y) @ self.gravity

    def G_s(self, s, x, y):
        return self._tensor("b_s", s, x, y) @ self.gravity

    @property
    def P_g(self):
        return self.rho_P * self.gravity


class ModelA(ModelCoefficients):
    """Wetting-phase pressure / nonwetting saturation formulation."""

    def __init__(self, setup):
        super().__init__(setup, "A")

    def scalars(self, s, rock):
        c = self.capillary(s, rock)
        rw, rn = self.fluids.rho_w, self.fluids.rho_n
        lt = c.lam_n + c.lam_w
        a_ps = c.lam_n * c.dp_c
        da_ps = c.dlam_n * c.dp_c + c.lam_n * c.d2p_c
        zero = np.zeros_like(lt)
        return Coefficients(lt, a_ps, c.lam_n, a_ps,
                            -(rw * c.lam_w + rn * c.lam_n), zero,
                            c.dlam_n + c.dlam_w, da_ps, c.dlam_n, da_ps,
                            -(rw * c.dlam_w + rn * c.dlam_n), zero)


class ModelB(ModelCoefficients):
    """Formulation in the mean pressure p_w + p_c / 2 and s_n."""

    def __init__(self, setup):
        super().__init__(setup, "B")

    def scalars(self, s, rock):
        c = self.capillary(s, rock)
        rw, rn = self.fluids.rho_w, self.fluids.rho_n
        lt = c.lam_n + c.lam_w
        ld = 0.5 * (c.lam_n - c.lam_w)
        a_ps = ld * c.dp_c
        da_ps = 0.5 * (c.dlam_n - c.dlam_w) * c.dp_c + ld * c.d2p_c
        a_ss = 0.5 * c.lam_n * c.dp_c
        da_ss = 0.5 * (c.dlam_n * c.dp_c + c.lam_n * c.d2p_c)
        zero = np.zeros_like(lt)
        return Coefficients(lt, a_ps, c.lam_n, a_ss,
                            -(rw * c.lam_w + rn * c.lam_n), zero,
                            c.dlam_n + c.dlam_w, da_ps, c.dlam_n, da_ss,
                            -(rw * c.dlam_w + rn * c.dlam_n), zero)

    def pressure_shift(self, s, rock):
        return 0.5 * self.capillary(s, rock).p_c


class ConstantModel(ModelCoefficients):
    """Saturation-independent coefficients (frozen-coefficient test model)."""

    def __init__(self, setup, a_pp=1e-7, a_ps=0.0, a_sp=5e-8, a_ss=1e-9, b_p=0.0, b_s=0.0,
                 rho_P=0.0):
        super().__init__(setup, "constant")
        self._vals = (a_pp, a_ps, a_sp, a_ss, b_p, b_s)
        self._rho_P = rho_P

    @property
    def rho_P(self):
        return self._rho_P

    def scalars(self, s, rock):
        s = np.asarray(s, float)
        vals = [np.full(s.shape, v, dtype=float) for v in self._vals]
        zero = np.zeros(s.shape)
        return Coefficients(*vals, zero, zero, zero, zero, zero, zero)


def model_a_coefficients(setup):
    return ModelA(setup)


def model_b_coefficients(setup):
    return ModelB(setup)


MODELS = {"A": ModelA, "B": ModelB}
