"""Hot pointwise kernels with numba and pure-numpy implementations.

The public wrappers dispatch on :data:`dgtwophase._accel.USE_NUMBA`; both
paths are kept importable so tests and the benchmark can compare them.
"""
import numpy as np

from ._accel import USE_NUMBA, njit


# --------------------------------------------------------------------------
# Brooks-Corey constitutive laws
# --------------------------------------------------------------------------
def brooks_corey_numpy(s_n, s_wr, s_nr, theta, p_d, mu_n, mu_w, cutoff, eps):
    D = 1.0 - s_wr - s_nr
    s_we = (1.0 - s_n - s_wr) / D
    s_ne = (s_n - s_nr) / D
    dwe = np.full_like(s_we, -1.0) / D
    dne = np.full_like(s_ne, 1.0) / D
    if cutoff:
        lo, hi = eps, 1.0 - eps
        dwe = np.where((s_we < lo) | (s_we > hi), 0.0, dwe)
        dne = np.where((s_ne < lo) | (s_ne > hi), 0.0, dne)
        s_we = np.clip(s_we, lo, hi)
        s_ne = np.clip(s_ne, lo, hi)
    a = (2.0 + 3.0 * theta) / theta
    b = (2.0 + theta) / theta
    with np.errstate(divide="ignore", invalid="ignore"):
        kw = s_we ** a
        dkw = a * s_we ** (a - 1.0) * dwe
        web = s_we ** b
        kn = s_ne * s_ne * (1.0 - web)
        dkn = 2.0 * s_ne * (1.0 - web) * dne - s_ne * s_ne * b * s_we ** (b - 1.0) * dwe
        p_c = p_d * s_we ** (-1.0 / theta)
        # dp_c/ds_n and its derivative; only s_we enters p_c
        dp_c = -p_d / theta * s_we ** (-1.0 / theta - 1.0) * dwe
        d2p_c = p_d / theta * (1.0 / theta + 1.0) * s_we ** (-1.0 / theta - 2.0) * dwe * dwe
    return (p_c, dp_c, d2p_c, kn / mu_n, kw / mu_w, dkn / mu_n, dkw / mu_w)


@njit
def _brooks_corey_numba(s_n, s_wr, s_nr, theta, p_d, mu_n, mu_w, cutoff, eps):
    n = s_n.shape[0]
    out = np.empty((7, n))
    for k in range(n):
        D = 1.0 - s_wr[k] - s_nr[k]
        s_we = (1.0 - s_n[k] - s_wr[k]) / D
        s_ne = (s_n[k] - s_nr[k]) / D
        dwe = -1.0 / D
        dne = 1.0 / D
        if cutoff:
            if s_we < eps:
                s_we = eps
                dwe = 0.0
            elif s_we > 1.0 - eps:
                s_we = 1.0 - eps
                dwe = 0.0
            if s_ne < eps:
                s_ne = eps
                dne = 0.0
            elif s_ne > 1.0 - eps:
                s_ne = 1.0 - eps
                dne = 0.0
        th = theta[k]
        a = (2.0 + 3.0 * th) / th
        b = (2.0 + th) / th
        if s_we > 0.0:
            kw = s_we ** a
            dkw = a * s_we ** (a - 1.0) * dwe
            web = s_we ** b
            dweb = b * s_we ** (b - 1.0)
            pw = s_we ** (-1.0 / th)
            p_c = p_d[k] * pw
            dp_c = -p_d[k] / th * pw / s_we * dwe
            d2p_c = p_d[k] / th * (1.0 / th + 1.0) * pw / (s_we * s_we) * dwe * dwe
        else:
            kw = np.nan
            dkw = np.nan
            web = np.nan
            dweb = np.nan
            p_c = np.nan
            dp_c = np.nan
            d2p_c = np.nan
        kn = s_ne * s_ne * (1.0 - web)
        dkn = 2.0 * s_ne * (1.0 - web) * dne - s_ne * s_ne * dweb * dwe
        out[0, k] = p_c
        out[1, k] = dp_c
        out[2, k] = d2p_c
        out[3, k] = kn / mu_n
        out[4, k] = kw / mu_w
        out[5, k] = dkn / mu_n
        out[6, k] = dkw / mu_w
    return out


def brooks_corey_kernel(s_n, s_wr, s_nr, theta, p_d, mu_n, mu_w, cutoff=False,
                        eps=1e-5, use_numba=None):
    """Pointwise Brooks-Corey quantities for arrays of saturations.

    Returns ``(p_c, dp_c, d2p_c, lam_n, lam_w, dlam_n, dlam_w)`` where the
    derivatives are taken with respect to ``s_n``.  Rock parameters may be
    scalars or arrays broadcastable to ``s_n``.
    """
    s_n = np.asarray(s_n, dtype=float)
    shape = s_n.shape
    args = [np.ascontiguousarray(np.broadcast_to(np.asarray(v, dtype=float), shape)).ravel()
            for v in (s_n, s_wr, s_nr, theta, p_d)]
    if use_numba is None:
        use_numba = USE_NUMBA
    if use_numba:
        out = _brooks_corey_numba(*args, float(mu_n), float(mu_w), bool(cutoff), float(eps))
        return tuple(o.reshape(shape) for o in out)
    out = brooks_corey_numpy(*args, float(mu_n), float(mu_w), bool(cutoff), float(eps))
    return tuple(np.asarray(o).reshape(shape) for o in out)


# --------------------------------------------------------------------------
# scaling limiter factors
# --------------------------------------------------------------------------
def scaling_factors_numpy(mean, vals, s_min, s_max, tiny=1e-14):
    d = mean[:, None] - vals
    # points below the mean are checked against s_min, points above against s_max
    below = d >= tiny
    above = d <= -tiny
    dd = np.where(below | above, np.abs(d), 1.0)
    r_lo = np.where(below, np.abs(mean[:, None] - s_min) / dd, np.inf)
    r_hi = np.where(above, np.abs(s_max - mean[:, None]) / dd, np.inf)
    chi = np.minimum(np.minimum(r_lo, r_hi).min(axis=1), 1.0)
    return chi


@njit
def _scaling_factors_numba(mean, vals, s_min, s_max, tiny):
    n, q = vals.shape
    chi = np.ones(n)
    for e in range(n):
        m = mean[e]
        c = 1.0
        for k in range(q):
            d = m - vals[e, k]
            if d >= tiny:
                r = abs(m - s_min) / d
            elif d <= -tiny:
                r = abs(s_max - m) / -d
            else:
                continue
            if r < c:
                c = r
        chi[e] = c
    return chi


def scaling_factors(mean, vals, s_min, s_max, tiny=1e-14, use_numba=None):
    """Per-element factor: the largest chi <= 1 keeping m + chi (s(x) - m) in bounds.

    Points below the mean m give |(m - s_min)/(m - s(x))|, points above give
    |(s_max - m)/(m - s(x))|; a function already within bounds gets chi = 1.
    """
    mean = np.ascontiguousarray(mean, dtype=float)
    vals = np.ascontiguousarray(vals, dtype=float)
    if use_numba is None:
        use_numba = USE_NUMBA
    if use_numba:
        return _scaling_factors_numba(mean, vals, float(s_min), float(s_max), float(tiny))
    return scaling_factors_numpy(mean, vals, s_min, s_max, tiny)
