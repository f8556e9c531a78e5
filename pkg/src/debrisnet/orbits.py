"""Two-body conversions between classical elements and state vectors (vectorized)."""
from __future__ import annotations

import numpy as np

from .domain import MU_KM3_S2


def coe_to_rv(a, e, inc, raan, argp, nu, mu: float = MU_KM3_S2):
    """Position (km) and velocity (km/s), shape (n, 3). Angles in radians."""
    a, e, inc, raan, argp, nu = np.broadcast_arrays(*(np.asarray(x, dtype=float)
                                                      for x in (a, e, inc, raan, argp, nu)))
    p = a * (1.0 - e * e)
    r = p / (1.0 + e * np.cos(nu))
    # perifocal frame
    r_pf = np.stack([r * np.cos(nu), r * np.sin(nu), np.zeros_like(r)], axis=-1)
    k = np.sqrt(mu / p)
    v_pf = np.stack([-k * np.sin(nu), k * (e + np.cos(nu)), np.zeros_like(r)], axis=-1)
    cO, sO = np.cos(raan), np.sin(raan)
    cw, sw = np.cos(argp), np.sin(argp)
    ci, si = np.cos(inc), np.sin(inc)
    rot = np.empty(a.shape + (3, 3))
    rot[..., 0, 0] = cO * cw - sO * sw * ci
    rot[..., 0, 1] = -cO * sw - sO * cw * ci
    rot[..., 0, 2] = sO * si
    rot[..., 1, 0] = sO * cw + cO * sw * ci
    rot[..., 1, 1] = -sO * sw + cO * cw * ci
    rot[..., 1, 2] = -cO * si
    rot[..., 2, 0] = sw * si
    rot[..., 2, 1] = cw * si
    rot[..., 2, 2] = ci
    return np.einsum("...ij,...j->...i", rot, r_pf), np.einsum("...ij,...j->...i", rot, v_pf)


def rv_to_aei(r, v, mu: float = MU_KM3_S2):
    """Semi-major axis (km), eccentricity and inclination (deg) from state vectors.

    Unbound states get ``a = inf`` and ``e >= 1``.
    """
    r = np.asarray(r, dtype=float)
    v = np.asarray(v, dtype=float)
    rn = np.linalg.norm(r, axis=-1)
    v2 = np.einsum("...i,...i->...", v, v)
    h = np.cross(r, v)
    hn = np.linalg.norm(h, axis=-1)
    inc = np.degrees(np.arccos(np.clip(h[..., 2] / hn, -1.0, 1.0)))
    energy = 0.5 * v2 - mu / rn
    with np.errstate(divide="ignore"):
        a = np.where(energy < 0, -mu / (2.0 * energy), np.inf)
    rv = np.einsum("...i,...i->...", r, v)
    evec = ((v2 - mu / rn)[..., None] * r - rv[..., None] * v) / mu
    e = np.linalg.norm(evec, axis=-1)
    return a, e, inc


def true_anomaly_at_radius(a, e, r, rng: np.random.Generator):
    """True anomaly where the orbit passes radius ``r`` (clamped to the apsides), random branch."""
    a, e, r = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in (a, e, r)))
    p = a * (1 - e * e)
    with np.errstate(divide="ignore", invalid="ignore"):
        c = np.where(e > 1e-12, (p / r - 1.0) / e, 1.0)
    nu = np.arccos(np.clip(c, -1.0, 1.0))
    sign = np.where(rng.random(a.shape) < 0.5, -1.0, 1.0)
    circ = e <= 1e-12
    nu = np.where(circ, rng.uniform(0, 2 * np.pi, a.shape), nu * sign)
    return nu
