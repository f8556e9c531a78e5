"""Core data model: species, orbit sites, objects, nodes, network state and configuration.

Objects are stored column-wise in :class:`Population` (one numpy array per field)
so the stepper can work on whole populations at once.  :class:`SpaceObject` and
:class:`Node` are thin row/group views for callers that prefer objects.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, fields, replace
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

R_EARTH_KM = 6378.137
MU_KM3_S2 = 398600.4418
SECONDS_PER_DAY = 86400.0
DAYS_PER_YEAR = 365.25


class SpeciesClass(enum.IntEnum):
    """Object species. The integer value is the column code used in arrays."""

    P = 0  # active payload
    U = 1  # upper stage / rocket body
    N = 2  # non-manoeuvrable (derelict) satellite
    F = 3  # fragment

    @classmethod
    def parse(cls, value) -> "SpeciesClass":
        if isinstance(value, SpeciesClass):
            return value
        if isinstance(value, (int, np.integer)):
            return cls(int(value))
        return cls[str(value).strip().upper()]


N_SPECIES = len(SpeciesClass)


class OutOfDomain(enum.Enum):
    REENTERED = "reentered"
    ESCAPED = "escaped"


# integer codes used in site arrays for objects that left the grid
SITE_REENTERED = -1
SITE_ESCAPED = -2


@dataclass(frozen=True)
class OrbitSite:
    site_id: int
    alt_lo: float
    alt_hi: float
    inc_lo: float
    inc_hi: float

    def __post_init__(self):
        if not self.alt_lo < self.alt_hi:
            raise ValueError(f"alt_lo must be < alt_hi, got {self.alt_lo}, {self.alt_hi}")
        if not (0.0 <= self.inc_lo < self.inc_hi <= 180.0):
            raise ValueError(f"bad inclination bin [{self.inc_lo}, {self.inc_hi}]")

    @property
    def alt_mid(self) -> float:
        return 0.5 * (self.alt_lo + self.alt_hi)

    def label(self) -> str:
        return f"[{self.alt_lo:g},{self.alt_hi:g}]x[{self.inc_lo:g},{self.inc_hi:g}]"


def effective_max_inclination(inc_lo: float, inc_hi: float) -> float:
    """Inclination (rad) bounding the latitude band swept by orbits in a bin."""
    if inc_lo <= 90.0 <= inc_hi:
        return math.pi / 2
    if inc_lo > 90.0:
        return math.pi - math.radians(inc_lo)
    return math.radians(inc_hi)


def node_volume(site: OrbitSite, r_earth: float = R_EARTH_KM) -> float:
    """Volume (km^3) of the spherical shell slab reachable by orbits in ``site``."""
    r = r_earth + site.alt_lo
    dr = site.alt_hi - site.alt_lo
    factor = math.sin(effective_max_inclination(site.inc_lo, site.inc_hi))
    return 4.0 * math.pi / 3.0 * factor * ((r + dr) ** 3 - r**3)


def _bin_index(values: np.ndarray, edges: np.ndarray) -> np.ndarray:
    """Half-open binning with the last bin closed. -1 below, len(edges)-1 above."""
    idx = np.searchsorted(edges, values, side="right") - 1
    nb = len(edges) - 1
    idx = np.where(values == edges[-1], nb - 1, idx)
    idx = np.where(values > edges[-1], nb, idx)
    return idx


@dataclass(frozen=True, eq=False)
class SiteGrid:
    """Rectangular altitude x inclination tiling of the orbital domain.

    Site ids run inclination-fastest: ``site_id = shell * n_inc + inc_bin``.
    """

    alt_edges: np.ndarray  # km above surface
    inc_edges: np.ndarray  # deg
    r_earth: float = R_EARTH_KM

    def __post_init__(self):
        alt = np.asarray(self.alt_edges, dtype=float)
        inc = np.asarray(self.inc_edges, dtype=float)
        if alt.ndim != 1 or len(alt) < 2 or np.any(np.diff(alt) <= 0):
            raise ValueError("altitude edges must be strictly increasing")
        if inc.ndim != 1 or len(inc) < 2 or np.any(np.diff(inc) <= 0):
            raise ValueError("inclination edges must be strictly increasing")
        if inc[0] != 0.0 or inc[-1] != 180.0:
            raise ValueError("inclination edges must span [0, 180]")
        object.__setattr__(self, "alt_edges", alt)
        object.__setattr__(self, "inc_edges", inc)

    @classmethod
    def uniform(cls, shell_km: float = 50.0, inc_deg: float = 60.0,
                alt_min: float = 200.0, alt_max: float = 2200.0,
                r_earth: float = R_EARTH_KM) -> "SiteGrid":
        n_sh = int(round((alt_max - alt_min) / shell_km))
        n_in = int(round(180.0 / inc_deg))
        if not math.isclose(n_sh * shell_km, alt_max - alt_min) or not math.isclose(n_in * inc_deg, 180.0):
            raise ValueError("shell and inclination sizes must divide the domain")
        return cls(np.linspace(alt_min, alt_max, n_sh + 1), np.linspace(0.0, 180.0, n_in + 1), r_earth)

    @property
    def n_shells(self) -> int:
        return len(self.alt_edges) - 1

    @property
    def n_inc(self) -> int:
        return len(self.inc_edges) - 1

    @property
    def n_sites(self) -> int:
        return self.n_shells * self.n_inc

    @property
    def n_nodes(self) -> int:
        return self.n_sites * N_SPECIES

    @property
    def alt_min(self) -> float:
        return float(self.alt_edges[0])

    @property
    def alt_max(self) -> float:
        return float(self.alt_edges[-1])

    @property
    def radius_edges(self) -> np.ndarray:
        return self.alt_edges + self.r_earth

    def shell_mid_radius(self) -> np.ndarray:
        return 0.5 * (self.radius_edges[:-1] + self.radius_edges[1:])

    def site(self, site_id: int) -> OrbitSite:
        s, k = divmod(int(site_id), self.n_inc)
        return OrbitSite(int(site_id), float(self.alt_edges[s]), float(self.alt_edges[s + 1]),
                         float(self.inc_edges[k]), float(self.inc_edges[k + 1]))

    @property
    def sites(self) -> list[OrbitSite]:
        return [self.site(j) for j in range(self.n_sites)]

    def shell_of_site(self, site_id):
        return np.asarray(site_id) // self.n_inc

    def inc_bin_of_site(self, site_id):
        return np.asarray(site_id) % self.n_inc

    def site_id(self, shell, inc_bin):
        return np.asarray(shell) * self.n_inc + np.asarray(inc_bin)

    def volumes(self) -> np.ndarray:
        return np.array([node_volume(s, self.r_earth) for s in self.sites])

    def inc_bin(self, inc_deg) -> np.ndarray:
        idx = _bin_index(np.asarray(inc_deg, dtype=float), self.inc_edges)
        return np.clip(idx, 0, self.n_inc - 1)

    def shell_index(self, alt_km) -> np.ndarray:
        """Shell index per altitude; -1 below the floor, n_shells above the ceiling."""
        return _bin_index(np.asarray(alt_km, dtype=float), self.alt_edges)

    def site_index(self, a_km, inc_deg) -> np.ndarray:
        """Vectorized binning of (a, i); SITE_REENTERED / SITE_ESCAPED when outside."""
        sh = self.shell_index(np.asarray(a_km, dtype=float) - self.r_earth)
        ib = self.inc_bin(inc_deg)
        out = sh * self.n_inc + ib
        out = np.where(sh < 0, SITE_REENTERED, out)
        out = np.where(sh >= self.n_shells, SITE_ESCAPED, out)
        return out.astype(np.int64)

    def node_index(self, species, site_id):
        return np.asarray(site_id) * N_SPECIES + np.asarray(species)

    def node_label(self, node: int) -> str:
        site_id, sp = divmod(int(node), N_SPECIES)
        return f"{SpeciesClass(sp).name}{self.site(site_id).label()}"

    def to_mapping(self) -> dict:
        return {"alt_edges_km": self.alt_edges.tolist(), "inc_edges_deg": self.inc_edges.tolist(),
                "r_earth_km": self.r_earth}


def site_of(a: float, i: float, grid: SiteGrid):
    """Site containing (a - R_earth, i), or an :class:`OutOfDomain` label."""
    idx = int(grid.site_index(np.array([a]), np.array([i]))[0])
    if idx == SITE_REENTERED:
        return OutOfDomain.REENTERED
    if idx == SITE_ESCAPED:
        return OutOfDomain.ESCAPED
    return grid.site(idx)


@dataclass(frozen=True)
class SpaceObject:
    object_id: int
    species: SpeciesClass
    a: float  # km
    e: float
    i: float  # deg
    mass: float  # kg
    radius: float  # m
    area: float  # m^2
    cd: float = 2.2
    mission_elapsed: float = 0.0  # years

    def __post_init__(self):
        object.__setattr__(self, "species", SpeciesClass.parse(self.species))
        problems = validate_fields(self.a, self.e, self.i, self.mass, self.radius, self.area)
        if problems:
            raise ValueError("; ".join(problems))

    @property
    def diameter(self) -> float:
        return 2.0 * self.radius


def validate_fields(a, e, i, mass, radius, area, r_earth: float = R_EARTH_KM) -> list[str]:
    out = []
    if not a > r_earth:
        out.append(f"a={a} must exceed Earth radius")
    if not 0.0 <= e < 1.0:
        out.append(f"e={e} must be in [0, 1)")
    if not 0.0 <= i <= 180.0:
        out.append(f"i={i} must be in [0, 180]")
    for name, v in (("mass", mass), ("radius", radius), ("area", area)):
        if not v > 0:
            out.append(f"{name}={v} must be positive")
    return out


_FLOAT_COLS = ("a", "e", "inc", "mass", "radius", "area", "cd", "age")


@dataclass
class Population:
    """Column store of space objects.

    ``site`` holds the current site id (or a negative out-of-domain code) and is
    filled by :meth:`assign_sites` or by the residence sampler.
    """

    object_id: np.ndarray
    species: np.ndarray
    a: np.ndarray
    e: np.ndarray
    inc: np.ndarray
    mass: np.ndarray
    radius: np.ndarray
    area: np.ndarray
    cd: np.ndarray
    age: np.ndarray
    site: np.ndarray

    def __post_init__(self):
        self.object_id = np.asarray(self.object_id, dtype=np.int64)
        self.species = np.asarray(self.species, dtype=np.int8)
        for name in _FLOAT_COLS:
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))
        self.site = np.asarray(self.site, dtype=np.int64)
        n = len(self.object_id)
        for f in fields(self):
            if len(getattr(self, f.name)) != n:
                raise ValueError(f"column {f.name} has wrong length")

    @classmethod
    def empty(cls) -> "Population":
        z = np.zeros(0)
        return cls(np.zeros(0, np.int64), np.zeros(0, np.int8), *([z] * 8), np.zeros(0, np.int64))

    @classmethod
    def from_arrays(cls, *, object_id, species, a, e, inc, mass, radius, area, cd=2.2,
                    age=0.0, site=None) -> "Population":
        n = len(np.atleast_1d(object_id))
        bc = lambda v, dt=float: np.broadcast_to(np.asarray(v, dtype=dt), (n,)).copy()
        return cls(bc(object_id, np.int64), bc(species, np.int8), bc(a), bc(e), bc(inc), bc(mass),
                   bc(radius), bc(area), bc(cd), bc(age),
                   bc(SITE_ESCAPED if site is None else site, np.int64))

    @classmethod
    def from_objects(cls, objs: Iterable[SpaceObject]) -> "Population":
        objs = list(objs)
        if not objs:
            return cls.empty()
        return cls.from_arrays(
            object_id=[o.object_id for o in objs], species=[int(o.species) for o in objs],
            a=[o.a for o in objs], e=[o.e for o in objs], inc=[o.i for o in objs],
            mass=[o.mass for o in objs], radius=[o.radius for o in objs], area=[o.area for o in objs],
            cd=[o.cd for o in objs], age=[o.mission_elapsed for o in objs])

    def __len__(self) -> int:
        return len(self.object_id)

    def object(self, k: int) -> SpaceObject:
        return SpaceObject(int(self.object_id[k]), SpeciesClass(int(self.species[k])), float(self.a[k]),
                           float(self.e[k]), float(self.inc[k]), float(self.mass[k]),
                           float(self.radius[k]), float(self.area[k]), float(self.cd[k]),
                           float(self.age[k]))

    def __iter__(self) -> Iterator[SpaceObject]:
        for k in range(len(self)):
            yield self.object(k)

    def __getitem__(self, k):
        if isinstance(k, (int, np.integer)):
            return self.object(int(k))
        return self.take(k)

    def take(self, idx) -> "Population":
        return Population(*(getattr(self, f.name)[idx] for f in fields(self)))

    def copy(self) -> "Population":
        return Population(*(getattr(self, f.name).copy() for f in fields(self)))

    @staticmethod
    def concat(parts: Sequence["Population"]) -> "Population":
        parts = [p for p in parts if len(p)]
        if not parts:
            return Population.empty()
        if len(parts) == 1:
            return parts[0]
        return Population(*(np.concatenate([getattr(p, f.name) for p in parts]) for f in fields(Population)))

    @property
    def diameter(self) -> np.ndarray:
        return 2.0 * self.radius

    def counts_by_species(self) -> dict[str, int]:
        c = np.bincount(self.species.astype(np.int64), minlength=N_SPECIES)
        return {s.name: int(c[s]) for s in SpeciesClass}

    def assign_sites(self, grid: SiteGrid) -> "Population":
        """Bin by (a, i); eccentric objects are later re-binned by residence sampling."""
        self.site = grid.site_index(self.a, self.inc)
        return self


@dataclass
class Node:
    species: SpeciesClass
    site: OrbitSite
    members: Population

    def __post_init__(self):
        self.species = SpeciesClass.parse(self.species)
        if len(self.members) and np.any(self.members.species != int(self.species)):
            raise ValueError("node members must share the node species")

    @classmethod
    def from_objects(cls, species, site: OrbitSite, objects: Iterable[SpaceObject]) -> "Node":
        return cls(species, site, Population.from_objects(objects))

    @property
    def objects(self) -> list[SpaceObject]:
        return list(self.members)

    @property
    def n(self) -> int:
        return len(self.members)

    @property
    def diameters(self) -> np.ndarray:
        return self.members.diameter


@dataclass
class CollisionCounters:
    catastrophic: int = 0
    non_catastrophic: int = 0
    small: int = 0

    @property
    def total(self) -> int:
        return self.catastrophic + self.non_catastrophic


@dataclass
class NetworkState:
    """Population plus clock. Nodes are views built on demand from the column store."""

    epoch: float
    population: Population
    grid: SiteGrid
    counters: CollisionCounters = field(default_factory=CollisionCounters)
    next_id: int = 0

    def __post_init__(self):
        if len(self.population):
            self.next_id = max(self.next_id, int(self.population.object_id.max()) + 1)

    @classmethod
    def from_population(cls, population: Population, grid: SiteGrid, epoch: float = 0.0,
                        rng: np.random.Generator | None = None) -> "NetworkState":
        """Bin a population onto ``grid``; eccentric orbits get a sampled residence shell."""
        from .decay import sample_residence_shell

        pop = population.copy()
        rng = np.random.default_rng(0) if rng is None else rng
        shell = sample_residence_shell(pop.a, pop.e, grid, rng)
        site = np.where(shell >= 0, shell * grid.n_inc + grid.inc_bin(pop.inc), shell)
        pop.site = site.astype(np.int64)
        keep = pop.site >= 0
        return cls(epoch, pop.take(keep), grid)

    def copy(self) -> "NetworkState":
        return NetworkState(self.epoch, self.population.copy(), self.grid,
                            replace(self.counters), self.next_id)

    def node_ids(self) -> np.ndarray:
        return self.grid.node_index(self.population.species.astype(np.int64), self.population.site)

    def node_counts(self) -> np.ndarray:
        return np.bincount(self.node_ids(), minlength=self.grid.n_nodes)

    def node(self, species, site_id: int) -> Node:
        sp = SpeciesClass.parse(species)
        mask = (self.population.species == int(sp)) & (self.population.site == site_id)
        return Node(sp, self.grid.site(site_id), self.population.take(mask))

    @property
    def nodes(self) -> list[Node]:
        return [self.node(sp, j) for j in range(self.grid.n_sites) for sp in SpeciesClass]

    def species_counts(self) -> np.ndarray:
        return np.bincount(self.population.species.astype(np.int64), minlength=N_SPECIES)


@dataclass
class SimConfig:
    dt_days: float = 30.0
    horizon_years: float = 100.0
    s_cam: float = 0.9999
    gamma: float = 0.05
    kappa: float = 5.3
    mission_lifetime_years: float = 5.0
    lc_min_m: float = 0.1
    n_size_bins: int = 50
    mu: float = MU_KM3_S2
    r_earth: float = R_EARTH_KM
    adr_per_year: dict = field(default_factory=lambda: {s.name: 0.0 for s in SpeciesClass})
    adr_sites: list | None = None
    rng_seed: int = 0
    shell_km: float = 50.0
    inc_deg: float = 60.0
    alt_min_km: float = 200.0
    alt_max_km: float = 2200.0
    start_year: float = 2023.0
    literal_circular_drag: bool = False

    def __post_init__(self):
        for name in ("s_cam", "gamma"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if not self.dt_days > 0:
            raise ValueError("dt_days must be positive")
        if self.kappa < 0:
            raise ValueError("kappa must be non-negative")
        if int(self.n_size_bins) < 1:
            raise ValueError("n_size_bins must be >= 1")
        if self.horizon_years < 0:
            raise ValueError("horizon_years must be non-negative")
        self.n_size_bins = int(self.n_size_bins)
        adr = {s.name: 0.0 for s in SpeciesClass}
        adr.update({SpeciesClass.parse(k).name: float(v) for k, v in (self.adr_per_year or {}).items()})
        self.adr_per_year = adr

    @property
    def dt_years(self) -> float:
        return self.dt_days / DAYS_PER_YEAR

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon_years * DAYS_PER_YEAR / self.dt_days))

    def grid(self) -> SiteGrid:
        return SiteGrid.uniform(self.shell_km, self.inc_deg, self.alt_min_km, self.alt_max_km, self.r_earth)

    def to_mapping(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_mapping(cls, data: Mapping) -> "SimConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**dict(data))
