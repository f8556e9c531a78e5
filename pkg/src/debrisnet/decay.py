"""Atmospheric density, closed-form drag decay, residence weights and inter-shell flows."""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.special import i0

from .domain import (MU_KM3_S2, N_SPECIES, R_EARTH_KM, SECONDS_PER_DAY, SITE_ESCAPED,
                     SITE_REENTERED, SiteGrid)

# Piecewise-exponential mean atmosphere: base altitude (km), density (kg/m^3), scale height (km)
_BASE_ATMOSPHERE = np.array([
    [100, 5.297e-7, 5.877], [110, 9.661e-8, 7.263], [120, 2.438e-8, 9.473],
    [130, 8.484e-9, 12.636], [140, 3.845e-9, 16.149], [150, 2.070e-9, 22.523],
    [180, 5.464e-10, 29.740], [200, 2.789e-10, 37.105], [250, 7.248e-11, 45.546],
    [300, 2.418e-11, 53.628], [350, 9.518e-12, 53.298], [400, 3.725e-12, 58.515],
    [450, 1.585e-12, 60.828], [500, 6.967e-13, 63.822], [600, 1.454e-13, 71.835],
    [700, 3.614e-14, 88.667], [800, 1.170e-14, 124.64], [900, 5.245e-15, 181.05],
    [1000, 3.019e-15, 268.00],
])


# The base table corresponds to moderately high activity; multi-cycle runs use 80% of it by default.
LONG_RUN_SCALE = 0.8


def mean_density(alt_km) -> np.ndarray:
    """Cycle-averaged density (kg/m^3) from the piecewise-exponential base table."""
    h = np.asarray(alt_km, dtype=float)
    k = np.clip(np.searchsorted(_BASE_ATMOSPHERE[:, 0], h, side="right") - 1, 0, len(_BASE_ATMOSPHERE) - 1)
    h0, rho0, H = _BASE_ATMOSPHERE[k].T
    return rho0 * np.exp(-(h - h0) / H)


def solar_amplitude(alt_km) -> np.ndarray:
    """Log-amplitude of the solar-cycle density swing (max/min ratio is exp(2A))."""
    return np.interp(alt_km, [100.0, 200.0, 400.0, 600.0, 800.0], [0.1, 0.5, 1.0, 1.3, 1.4])


def generate_density_table(alt_km=None, n_phase: int = 12) -> tuple[np.ndarray, np.ndarray]:
    """Altitude x solar-phase density grid. Phase 0 is solar maximum.

    The modulation is normalised so the average over a cycle equals :func:`mean_density`.
    """
    alt = np.arange(100.0, 2201.0, 10.0) if alt_km is None else np.asarray(alt_km, dtype=float)
    phase = np.arange(n_phase) / n_phase
    A = solar_amplitude(alt)[:, None]
    rho = mean_density(alt)[:, None] * np.exp(A * np.cos(2 * np.pi * phase)[None, :]) / i0(A)
    return alt, rho


def write_density_table(path, alt_km=None, n_phase: int = 12) -> None:
    alt, rho = generate_density_table(alt_km, n_phase)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["altitude_km", "phase_index", "rho_kg_m3"])
        for i, h in enumerate(alt):
            for k in range(rho.shape[1]):
                w.writerow([f"{h:g}", k, f"{rho[i, k]:.6e}"])


def read_density_table(path) -> tuple[np.ndarray, np.ndarray]:
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(row for row in fh if not row.startswith("#")):
            rows.append((float(rec["altitude_km"]), int(rec["phase_index"]), float(rec["rho_kg_m3"])))
    alts = np.unique([r[0] for r in rows])
    n_phase = max(r[1] for r in rows) + 1
    table = np.full((len(alts), n_phase), np.nan)
    pos = {h: i for i, h in enumerate(alts)}
    for h, k, rho in rows:
        table[pos[h], k] = rho
    if np.isnan(table).any():
        raise ValueError(f"density table {path} is not a full altitude x phase grid")
    if np.any(table <= 0):
        raise ValueError("densities must be positive")
    return alts, table


class DensityModel:
    """Density as a function of altitude and time.

    ``mode="table"`` interpolates log-density bilinearly in altitude and solar
    phase; ``mode="exponential"`` is a single static exponential.
    """

    def __init__(self, mode: str = "table", table_path=None, period_years: float = 11.0,
                 phase_offset: float = 0.864, rho0: float = 2.789e-10, h0: float = 200.0,
                 scale_height: float = 60.0, scale: float | None = None):
        if mode not in ("table", "exponential"):
            raise ValueError(f"unknown density mode {mode!r}")
        self.mode = mode
        self.period_years = float(period_years)
        self.phase_offset = float(phase_offset)
        self.rho0, self.h0, self.scale_height = float(rho0), float(h0), float(scale_height)
        if scale is None:
            scale = LONG_RUN_SCALE if mode == "table" else 1.0
        self.scale = float(scale)
        self._warned = False
        if mode == "table":
            if table_path is None:
                with resources.as_file(resources.files("debrisnet") / "data" / "density_table.csv") as p:
                    self.alt, self.table = read_density_table(p)
            else:
                self.alt, self.table = read_density_table(Path(table_path))
            self.log_table = np.log(self.table)

    @classmethod
    def static(cls, rho0: float, h0: float, scale_height: float) -> "DensityModel":
        return cls("exponential", rho0=rho0, h0=h0, scale_height=scale_height)

    @classmethod
    def zero(cls) -> "DensityModel":
        return cls("exponential", rho0=0.0)

    def phase(self, epoch_years: float) -> float:
        return (epoch_years / self.period_years + self.phase_offset) % 1.0

    def log_profile(self, epoch_years: float) -> np.ndarray:
        """Log-density column at the table altitudes for one epoch (phase-interpolated)."""
        n = self.table.shape[1]
        x = self.phase(epoch_years) * n
        k0 = int(np.floor(x)) % n
        w = x - np.floor(x)
        return (1 - w) * self.log_table[:, k0] + w * self.log_table[:, (k0 + 1) % n]

    def profile(self, epoch_years: float):
        """Fast vectorized density function of altitude for one epoch, clamped silently."""
        if self.mode == "exponential":
            return lambda h: self.scale * self.rho0 * np.exp(-(np.asarray(h, dtype=float) - self.h0)
                                                            / self.scale_height)
        lp = self.log_profile(epoch_years)
        alt = self.alt
        return lambda h: self.scale * np.exp(np.interp(h, alt, lp))

    def density(self, altitude_km, epoch_years: float = 0.0):
        h = np.asarray(altitude_km, dtype=float)
        if self.mode == "table" and (np.any(h < self.alt[0]) or np.any(h > self.alt[-1])):
            warnings.warn(f"altitude outside density table [{self.alt[0]}, {self.alt[-1]}] km; clamped",
                          RuntimeWarning, stacklevel=2)
        out = self.profile(epoch_years)(h)
        return float(out) if out.ndim == 0 else out


def density(altitude_km, epoch_years: float, model: DensityModel | None = None):
    return (model or default_density()).density(altitude_km, epoch_years)


_DEFAULT = None


def default_density() -> DensityModel:
    global _DEFAULT
    if _DEFAULT is None:
        _DEFAULT = DensityModel()
    return _DEFAULT


_E_CIRC = 1e-12


def drag_step(a, e, cd, area_per_mass, rho, dt_s, mu: float = MU_KM3_S2,
              literal_circular: bool = False):
    """Closed-form decay of (a, e) over ``dt_s`` seconds.

    ``a`` in km, ``area_per_mass`` in m^2/kg, ``rho`` in kg/m^3. Returns
    ``(a', e', reentered)`` where ``reentered`` flags objects whose solution
    decays to zero within the step.  Circular orbits use the ``e -> 0`` limit
    ``a' = a (1 - n a C dt)^2``; ``literal_circular=True`` instead sets beta = 1.
    """
    a, e, cd, am, rho = np.broadcast_arrays(*(np.asarray(x, dtype=float)
                                              for x in (a, e, cd, area_per_mass, rho)))
    a_m = a * 1e3
    mu_m = mu * 1e9
    n = np.sqrt(mu_m / a_m**3)
    C = 0.5 * cd * am * rho
    x = n * a_m * C * dt_s
    circ = e <= _E_CIRC  # tiny e would underflow beta**2
    beta = np.where(circ, 1.0, np.sqrt(3.0) / 2.0 * e)
    arg = np.arctan(beta) - beta * x
    with np.errstate(divide="ignore", invalid="ignore"):
        a_ecc = a * np.tan(arg) ** 2 / beta**2
        e_ecc = 2.0 / np.sqrt(3.0) * np.tan(arg)
    if literal_circular:
        a_circ = a * np.tan(np.pi / 4 - x) ** 2
        dead_circ = np.pi / 4 - x <= 0
    else:
        a_circ = a * (1.0 - x) ** 2
        dead_circ = x >= 1.0
    a_new = np.where(circ, a_circ, a_ecc)
    e_new = np.where(circ, 0.0, e_ecc)
    reentered = np.where(circ, dead_circ, arg <= 0)
    a_new = np.where(reentered, 0.0, a_new)
    e_new = np.where(reentered, 0.0, np.clip(e_new, 0.0, None))
    # no drag: return the inputs untouched (avoids tan(arctan) round-off)
    still = x == 0.0
    a_new = np.where(still, a, a_new)
    e_new = np.where(still, e, e_new)
    if a_new.ndim == 0:
        return float(a_new), float(e_new), bool(reentered)
    return a_new, e_new, reentered


_QUAD = {k: (np.arange(k) + 0.5) * np.pi / k for k in (8, 24)}


def orbit_averaged_density(a, e, rho_of_alt, r_earth: float = R_EARTH_KM):
    """Time-averaged density over one revolution (midpoint rule in eccentric anomaly).

    Orbits whose radius swings less than 1 km use the density at ``a``; the
    number of nodes grows with the swing ``a e``.
    """
    a = np.asarray(a, dtype=float)
    e = np.asarray(e, dtype=float)
    out = rho_of_alt(a - r_earth)
    swing = a * e
    for lo, hi, k in ((1.0, 250.0, 8), (250.0, np.inf, 24)):
        sel = (swing > lo) & (swing <= hi)
        if np.any(sel):
            w = 1.0 - e[sel, None] * np.cos(_QUAD[k])[None, :]
            out[sel] = (rho_of_alt(a[sel, None] * w - r_earth) * w).mean(axis=1)
    return out


def mean_anomaly_of(theta, e):
    """Mean anomaly for true anomaly ``theta`` in [0, pi]; equals g(theta, e)."""
    theta = np.asarray(theta, dtype=float)
    e = np.asarray(e, dtype=float)
    E = 2.0 * np.arctan2(np.sqrt(1.0 - e) * np.sin(theta / 2), np.sqrt(1.0 + e) * np.cos(theta / 2))
    return E - e * np.sin(E)


_CIRC_TOL = 1e-10


def residence_cdf(a, e, radius_edges):
    """Fraction of orbital period spent below each radius edge, shape (n, n_edges)."""
    a = np.atleast_1d(np.asarray(a, dtype=float))[:, None]
    e = np.atleast_1d(np.asarray(e, dtype=float))[:, None]
    r = np.asarray(radius_edges, dtype=float)[None, :]
    circ = e <= _CIRC_TOL
    es = np.where(circ, 0.5, e)  # placeholder avoids 0/0, result replaced below
    p = a * (1 - es * es)
    cos_t = np.clip((p / r - 1.0) / es, -1.0, 1.0)
    G = mean_anomaly_of(np.arccos(cos_t), es) / np.pi
    return np.where(circ, (r > a).astype(float), G)


@dataclass
class ResidenceWeights:
    """Per-shell residence fractions, normalised over the in-domain shells."""

    weights: np.ndarray
    below: float  # fraction of the period spent below the domain
    above: float  # fraction above the domain

    @property
    def out_of_domain(self) -> float:
        return self.below + self.above


def residence_weights(a: float, e: float, grid_or_edges, r_earth: float = R_EARTH_KM) -> ResidenceWeights:
    """Time-in-shell weights for one orbit over shells given as a grid or altitude edges (km)."""
    if isinstance(grid_or_edges, SiteGrid):
        edges = grid_or_edges.radius_edges
    else:
        edges = np.asarray(grid_or_edges, dtype=float) + r_earth
    if not 0.0 <= e < 1.0:
        raise ValueError("eccentricity must be in [0, 1)")
    G = residence_cdf(a, e, edges)[0]
    raw = np.diff(G)
    below, above = float(G[0]), float(1.0 - G[-1])
    total = raw.sum()
    w = raw / total if total > 0 else raw
    return ResidenceWeights(np.clip(w, 0.0, None), below, above)


def solve_kepler(M, e, tol: float = 1e-13, max_iter: int = 50):
    """Eccentric anomaly for mean anomaly ``M`` in [0, pi] (vectorized Newton)."""
    M = np.asarray(M, dtype=float)
    e = np.asarray(e, dtype=float)
    M, e = np.broadcast_arrays(M, e)
    E = np.where(e < 0.8, M + e * np.sin(M), np.pi)
    act = np.arange(E.size)
    Ef, Mf, ef = E.reshape(-1), M.reshape(-1), e.reshape(-1)
    for _ in range(max_iter):
        Ea, ea = Ef[act], ef[act]
        step = (Ea - ea * np.sin(Ea) - Mf[act]) / (1.0 - ea * np.cos(Ea))
        Ef[act] = Ea - step
        act = act[np.abs(step) >= tol]
        if len(act) == 0:
            break
    return Ef.reshape(E.shape)


def sample_residence_shell(a, e, grid: SiteGrid, rng: np.random.Generator) -> np.ndarray:
    """Draw one residence shell per object from its time-in-shell distribution.

    A time uniformly distributed over the in-domain part of the orbit is drawn
    as a mean anomaly, converted to a radius through Kepler's equation and
    binned.  Returns shell indices, ``SITE_REENTERED`` when the perigee is
    below the domain floor and ``SITE_ESCAPED`` when the orbit never enters the
    domain (or is unbound).
    """
    a = np.asarray(a, dtype=float)
    e = np.asarray(e, dtype=float)
    n = len(a)
    u = rng.random(n)
    out = np.full(n, SITE_ESCAPED, dtype=np.int64)
    if n == 0:
        return out
    R = grid.r_earth
    bound = np.isfinite(a) & (e < 1.0) & (a > 0)
    rp = np.where(bound, a * (1 - e), np.inf)
    ra = np.where(bound, a * (1 + e), np.inf)
    sh_p = grid.shell_index(rp - R)
    sh_a = grid.shell_index(ra - R)
    reent = bound & (sh_p < 0)
    out[reent] = SITE_REENTERED
    inside = bound & ~reent & (sh_p < grid.n_shells)
    same = inside & (sh_p == sh_a)
    out[same] = sh_p[same]
    span = np.flatnonzero(inside & (sh_p != sh_a))
    if len(span):
        aa, ee = a[span], e[span]
        # mean-anomaly window below the domain ceiling (the floor is below perigee here)
        G_top = residence_cdf(aa, ee, [grid.radius_edges[-1]])[:, 0]
        M = np.pi * u[span] * G_top
        r = aa * (1.0 - ee * np.cos(solve_kepler(M, ee)))
        out[span] = np.clip(grid.shell_index(r - R), sh_p[span], np.minimum(sh_a[span], grid.n_shells - 1))
    return out


@dataclass
class ShellFlows:
    """Outcome of one decay step for every object in a population."""

    a: np.ndarray
    e: np.ndarray
    site: np.ndarray  # new site id or negative out-of-domain code
    eps_minus: np.ndarray  # per node outflow (includes reentry / escape)
    eps_plus: np.ndarray  # per node inflow from other nodes
    reentered: np.ndarray  # bool per object
    escaped: np.ndarray
    moved: np.ndarray  # bool per object, changed node but stayed in domain


def decay_population(pop, grid: SiteGrid, density_model: DensityModel, epoch_years: float,
                     dt_days: float, rng: np.random.Generator, mu: float = MU_KM3_S2,
                     literal_circular: bool = False) -> ShellFlows:
    rho_fn = density_model.profile(epoch_years)
    n = len(pop)
    if n == 0:
        z = np.zeros(grid.n_nodes)
        zb = np.zeros(0, dtype=bool)
        return ShellFlows(pop.a, pop.e, pop.site, z, z.copy(), zb, zb, zb)
    rho = orbit_averaged_density(pop.a, pop.e, rho_fn, grid.r_earth)
    a1, e1, dead = drag_step(pop.a, pop.e, pop.cd, pop.area / pop.mass, rho,
                             dt_days * SECONDS_PER_DAY, mu, literal_circular)
    a_safe = np.where(dead, grid.r_earth, a1)
    shell = sample_residence_shell(a_safe, e1, grid, rng)
    shell = np.where(dead, SITE_REENTERED, shell)
    new_site = np.where(shell >= 0, shell * grid.n_inc + grid.inc_bin(pop.inc), shell)
    reentered = new_site == SITE_REENTERED
    escaped = new_site == SITE_ESCAPED
    species = pop.species.astype(np.int64)
    old_node = pop.site * N_SPECIES + species
    moved = (new_site >= 0) & (new_site != pop.site)
    left = moved | reentered | escaped
    eps_minus = np.bincount(old_node[left], minlength=grid.n_nodes).astype(float)
    new_node = new_site * N_SPECIES + species
    eps_plus = np.bincount(new_node[moved], minlength=grid.n_nodes).astype(float)
    return ShellFlows(a_safe, e1, new_site, eps_minus, eps_plus, reentered, escaped, moved)


def compute_shell_flows(state, dt_days: float, rng: np.random.Generator,
                        density_model: DensityModel | None = None, mu: float = MU_KM3_S2):
    """Drag-step every object of ``state`` and tally node outflows/inflows.

    Returns ``(eps_minus, eps_plus, reentered_ids)``; ``state`` is not modified.
    """
    flows = decay_population(state.population, state.grid, density_model or default_density(),
                             state.epoch, dt_days, rng, mu)
    return flows.eps_minus, flows.eps_plus, state.population.object_id[flows.reentered].tolist()


def expected_decay_flows(pop, grid: SiteGrid, density_model: DensityModel, epoch_years: float,
                         dt_days: float, mu: float = MU_KM3_S2):
    """Expected node-to-node flow counts (dict keyed by (src, dst) node) over one step.

    Uses residence weights instead of a sampled shell; reentry and escape are
    not destinations.
    """
    if len(pop) == 0:
        return {}
    rho = orbit_averaged_density(pop.a, pop.e, density_model.profile(epoch_years), grid.r_earth)
    a1, e1, dead = drag_step(pop.a, pop.e, pop.cd, pop.area / pop.mass, rho,
                             dt_days * SECONDS_PER_DAY, mu)
    live = ~dead & (a1 * (1 - e1) - grid.r_earth >= grid.alt_min)
    G = residence_cdf(np.where(live, a1, grid.r_earth + 1), e1, grid.radius_edges)
    W = np.diff(G, axis=1) * live[:, None]
    species = pop.species.astype(np.int64)
    ib = grid.inc_bin(pop.inc)
    src = pop.site * N_SPECIES + species
    out: dict = {}
    rows, shells = np.nonzero(W > 0)
    dst = (shells * grid.n_inc + ib[rows]) * N_SPECIES + species[rows]
    keep = dst != src[rows]
    for s, d, w in zip(src[rows][keep], dst[keep], W[rows, shells][keep]):
        out[(int(s), int(d))] = out.get((int(s), int(d)), 0.0) + float(w)
    return out
