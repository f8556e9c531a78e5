"""Collision rates between nodes, Poisson jump sampling and colliding-pair selection.

Units: lengths km, speeds km/s, cross-sections km^2 (diameters are stored in m),
rates per day.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .domain import MU_KM3_S2, R_EARTH_KM, SECONDS_PER_DAY, Node, node_volume

M2_TO_KM2 = 1e-6


class EmptyNodeError(ValueError):
    """Raised when a quantity is undefined for an empty node (or too few objects)."""


def representative_speed(mean_a, r_l, mu: float = MU_KM3_S2):
    """Vis-viva speed (km/s) at radius ``r_l`` for an orbit of semi-major axis ``mean_a``."""
    return np.sqrt(mu * (2.0 / r_l - 1.0 / mean_a))


def relative_speed(v_i, v_j, inc_i_deg, inc_j_deg):
    """Mean collision speed from representative speeds and mean inclinations (deg)."""
    c = np.cos(np.radians(inc_i_deg)) * np.cos(np.radians(inc_j_deg))
    return np.sqrt(np.maximum(v_i**2 + v_j**2 - 2.0 * v_i * v_j * c, 0.0))


def mean_relative_velocity(node_i: Node, node_j: Node, r_earth: float = R_EARTH_KM,
                           mu: float = MU_KM3_S2) -> float:
    """Average collision speed between two nodes in the same shell (km/s)."""
    if node_i.n == 0 or node_j.n == 0:
        raise EmptyNodeError("relative velocity undefined for an empty node")
    r_l = r_earth + node_i.site.alt_mid
    v_i = representative_speed(node_i.members.a.mean(), r_l, mu)
    v_j = representative_speed(node_j.members.a.mean(), r_l, mu)
    return float(relative_speed(v_i, v_j, node_i.members.inc.mean(), node_j.members.inc.mean()))


# Cross-sections from sufficient statistics (count, sum d, sum d^2); d in metres, result m^2.

def sigma_self_from_sums(n, s1, s2):
    n = np.asarray(n, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.pi / (4.0 * (n * n - n)) * (2.0 * (n - 2.0) * s2 + 2.0 * s1 * s1)
    return np.where(n >= 2, out, 0.0)


def sigma_cross_from_sums(n_i, s1_i, s2_i, n_j, s1_j, s2_j):
    n_i = np.asarray(n_i, dtype=float)
    n_j = np.asarray(n_j, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.pi / (4.0 * n_i * n_j) * (n_j * s2_i + n_i * s2_j + 2.0 * s1_i * s1_j)
    return np.where((n_i > 0) & (n_j > 0), out, 0.0)


def avg_cross_section_self(node: Node) -> float:
    """Mean pairwise collision cross-section within one node (km^2)."""
    d = node.diameters
    if len(d) < 2:
        raise EmptyNodeError("self cross-section needs at least two objects")
    return float(sigma_self_from_sums(len(d), d.sum(), (d * d).sum())) * M2_TO_KM2


def avg_cross_section_cross(node_i: Node, node_j: Node) -> float:
    """Mean pairwise collision cross-section between two nodes (km^2)."""
    di, dj = node_i.diameters, node_j.diameters
    if len(di) == 0 or len(dj) == 0:
        raise EmptyNodeError("cross cross-section needs two non-empty nodes")
    return float(sigma_cross_from_sums(len(di), di.sum(), (di * di).sum(),
                                       len(dj), dj.sum(), (dj * dj).sum())) * M2_TO_KM2


def rate_per_day(n_i, n_j_eff, dv_kms, sigma_km2, volume_km3):
    """Mean collision rate per day; ``n_j_eff`` is (n-1)/2 for self pairs."""
    return n_i * n_j_eff * dv_kms * sigma_km2 / volume_km3 * SECONDS_PER_DAY


@dataclass(frozen=True)
class CollisionRate:
    tau: float  # per day
    pair: tuple


def _is_self_pair(node_i: Node, node_j: Node) -> bool:
    return node_i is node_j or (node_i.species == node_j.species and node_i.site == node_j.site)


def mean_collision_rate(node_i: Node, node_j: Node, r_earth: float = R_EARTH_KM,
                        mu: float = MU_KM3_S2) -> CollisionRate:
    self_pair = _is_self_pair(node_i, node_j)
    n_i = node_i.n
    n_j_eff = (n_i - 1) / 2.0 if self_pair else node_j.n
    if n_i == 0 or n_j_eff <= 0:
        return CollisionRate(0.0, (node_i, node_j))
    dv = mean_relative_velocity(node_i, node_j, r_earth, mu)
    sigma = avg_cross_section_self(node_i) if self_pair else avg_cross_section_cross(node_i, node_j)
    vol = max(node_volume(node_i.site, r_earth), node_volume(node_j.site, r_earth))
    return CollisionRate(float(rate_per_day(n_i, n_j_eff, dv, sigma, vol)), (node_i, node_j))


def jump_multiplier(modifier: str, s_cam: float = 0.0, kappa: float = 1.0) -> float:
    if modifier == "plain":
        return 1.0
    if modifier == "cam":
        return 1.0 - s_cam
    if modifier == "cam2":
        return (1.0 - s_cam) ** 2
    if modifier == "small":
        return kappa
    raise ValueError(f"unknown modifier {modifier!r}")


def sample_jump(rate: float, dt: float, rng: np.random.Generator, modifier: str = "plain",
                s_cam: float = 0.0, kappa: float = 1.0) -> int:
    """Number of events in ``dt`` days for a Poisson process with ``rate`` per day."""
    if rate < 0:
        raise ValueError("rate must be non-negative")
    if dt <= 0:
        raise ValueError("dt must be positive")
    mean = jump_multiplier(modifier, s_cam, kappa) * rate * dt
    return int(rng.poisson(mean)) if mean > 0 else 0


@dataclass
class PairSelectionMatrix:
    P: np.ndarray
    bin_edges_i: np.ndarray  # radius bins, m
    bin_edges_j: np.ndarray
    bins_i: np.ndarray  # bin of each member of node i
    bins_j: np.ndarray
    self_pair: bool


def radius_bins(radius: np.ndarray, n_bins: int) -> tuple[np.ndarray, np.ndarray]:
    """Equal-width bins over [R_min, R_max]; returns (edges, bin index per object)."""
    if len(radius) == 0:
        return np.zeros(n_bins + 1), np.zeros(0, dtype=np.int64)
    lo, hi = float(radius.min()), float(radius.max())
    if hi <= lo:
        hi = lo * (1 + 1e-9) + 1e-12
    edges = np.linspace(lo, hi, n_bins + 1)
    idx = np.clip(np.searchsorted(edges, radius, side="right") - 1, 0, n_bins - 1)
    return edges, idx


def _bin_sums(d, idx, n_bins):
    return (np.bincount(idx, minlength=n_bins).astype(float),
            np.bincount(idx, weights=d, minlength=n_bins),
            np.bincount(idx, weights=d * d, minlength=n_bins))


def pair_matrix_from_members(d_i, d_j, n_bins: int, dv_kms: float, volume_km3: float,
                             dt_days: float, self_pair: bool, multiplier: float = 1.0):
    """Core of :func:`build_pair_selection_matrix` working on diameter arrays (m)."""
    edges_i, bi = radius_bins(0.5 * d_i, n_bins)
    n_i, s1_i, s2_i = _bin_sums(d_i, bi, n_bins)
    if self_pair:
        edges_j, bj = edges_i, bi
        n_j, s1_j, s2_j = n_i, s1_i, s2_i
    else:
        edges_j, bj = radius_bins(0.5 * d_j, n_bins)
        n_j, s1_j, s2_j = _bin_sums(d_j, bj, n_bins)
    sig = sigma_cross_from_sums(n_i[:, None], s1_i[:, None], s2_i[:, None],
                                n_j[None, :], s1_j[None, :], s2_j[None, :])
    pairs = n_i[:, None] * n_j[None, :]
    if self_pair:
        # unordered pairs: off-diagonal entries appear twice, diagonal uses (n-1)/2
        pairs = pairs / 2.0
        diag = np.arange(n_bins)
        sig[diag, diag] = sigma_self_from_sums(n_i, s1_i, s2_i)
        pairs[diag, diag] = n_i * (n_i - 1) / 2.0
    lam = multiplier * pairs * dv_kms * sig * M2_TO_KM2 / volume_km3 * SECONDS_PER_DAY * dt_days
    P = -np.expm1(-lam)
    return PairSelectionMatrix(P, edges_i, edges_j, bi, bj, self_pair)


def build_pair_selection_matrix(node_i: Node, node_j: Node, n_bins: int = 50, dt: float = 30.0,
                                r_earth: float = R_EARTH_KM, mu: float = MU_KM3_S2) -> PairSelectionMatrix:
    """Probability of at least one collision between each pair of radius bins in ``dt`` days."""
    if n_bins < 1:
        raise ValueError("n_bins must be >= 1")
    self_pair = _is_self_pair(node_i, node_j)
    vol = max(node_volume(node_i.site, r_earth), node_volume(node_j.site, r_earth))
    dv = mean_relative_velocity(node_i, node_j, r_earth, mu) if node_i.n and node_j.n else 0.0
    return pair_matrix_from_members(node_i.diameters, node_j.diameters, n_bins, dv, vol, dt, self_pair)


class NoPairError(ValueError):
    pass


def select_pair_indices(psm: PairSelectionMatrix, rng: np.random.Generator) -> tuple[int, int]:
    """Draw member indices (into node i and node j) of a colliding pair."""
    w = psm.P.ravel()
    total = w.sum()
    if not total > 0:
        raise NoPairError("pair-selection matrix has no positive entry")
    flat = int(np.searchsorted(np.cumsum(w), rng.random() * total, side="right"))
    flat = min(flat, len(w) - 1)
    k, l = divmod(flat, psm.P.shape[1])
    cand_i = np.flatnonzero(psm.bins_i == k)
    cand_j = np.flatnonzero(psm.bins_j == l)
    qi = int(cand_i[rng.integers(len(cand_i))])
    if psm.self_pair:
        cand_j = cand_j[cand_j != qi]
    qj = int(cand_j[rng.integers(len(cand_j))])
    return qi, qj


def select_colliding_pair(psm: PairSelectionMatrix, node_i: Node, node_j: Node,
                          rng: np.random.Generator):
    qi, qj = select_pair_indices(psm, rng)
    return node_i.members.object(qi), node_j.members.object(qj)
