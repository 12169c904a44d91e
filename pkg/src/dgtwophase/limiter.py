"""Bound-preserving scaling limiter for the saturation.

Each element polynomial is contracted towards its mean,
``s~ = chi_E (s - mean) + mean``, with the largest ``chi_E <= 1`` that
keeps ``s~`` inside ``[s_min, s_max]`` on the point set Lambda_E (volume
quadrature points plus full- and half-edge quadrature points on all four
edges, so hanging-face quadrature points are covered).
"""
import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np

from .basis import gauss, gauss_square, tabulate
from .dgspace import S, DgFunction
from .kernels import scaling_factors

log = logging.getLogger(__name__)


@dataclass
class LimiterConfig:
    s_min: float = 0.0
    s_max: float = 1.0
    n_points: Optional[int] = None  # Gauss points per direction; default max_order + 2
    enabled: bool = True

    def __post_init__(self):
        if not self.s_min < self.s_max:
            raise ValueError("need s_min < s_max")


@lru_cache(maxsize=None)
def limiter_points(n):
    """Reference points of Lambda_E for an ``n``-point Gauss rule."""
    t, _ = gauss(n)
    edge_t = np.concatenate([t, 0.5 * (t - 1.0), 0.5 * (t + 1.0)])
    one = np.ones_like(edge_t)
    vol, _ = gauss_square(n)
    pts = np.concatenate([vol,
                          np.column_stack([-one, edge_t]), np.column_stack([one, edge_t]),
                          np.column_stack([edge_t, -one]), np.column_stack([edge_t, one])])
    pts.setflags(write=False)
    return pts


@lru_cache(maxsize=None)
def _table(order, n):
    pts = limiter_points(n)
    (B,) = tabulate(order, pts[:, 0], pts[:, 1], deriv=0)
    return B


def point_values(u, field=S, n=None):
    """Yield ``(order, elements, coefficients, values on Lambda_E)`` per order group."""
    n = n or u.space.max_order + 2
    for r, els, c in u.field_blocks(field):
        yield r, els, c, c @ _table(r, n).T


def value_range(u, field=S, n=None):
    """(min, max) of a field over all Lambda_E points."""
    lo, hi = np.inf, -np.inf
    for _, _, _, v in point_values(u, field, n):
        lo, hi = min(lo, v.min()), max(hi, v.max())
    return lo, hi


def apply_scaling_limiter(u, cfg=None, field=S):
    """Return a limited copy of ``u`` (only ``field`` is changed).

    The number of scaled elements is stored on the result as ``n_limited``.
    """
    cfg = cfg or LimiterConfig()
    out = DgFunction(u.space, u.coeffs.copy())
    out.n_limited = 0
    if not cfg.enabled:
        return out
    for r, els, c, vals in point_values(u, field, cfg.n_points):
        c = c.copy()
        mean = 0.5 * c[:, 0]
        bad = (mean < cfg.s_min) | (mean > cfg.s_max)
        if bad.any():
            log.warning("clamping %d element means outside [%g, %g]", bad.sum(), cfg.s_min,
                        cfg.s_max)
            new_mean = np.clip(mean, cfg.s_min, cfg.s_max)
            vals = vals + (new_mean - mean)[:, None]
            mean = new_mean
            c[:, 0] = 2.0 * mean
        chi = scaling_factors(mean, vals, cfg.s_min, cfg.s_max)
        c[:, 1:] *= chi[:, None]
        out.n_limited += int(np.count_nonzero(chi < 1.0))
        out.set_field_blocks(field, r, els, c)
    return out
