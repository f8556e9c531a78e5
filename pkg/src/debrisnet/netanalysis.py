"""Network view of a population snapshot: link rates, link probabilities, degrees.

Edges are directed between nodes (species, site).  Kinds:

* ``C``   collision between two nodes of the same shell (stored in both directions)
* ``F``   fragment flow from a colliding node into an F node
* ``SC``  small-fragment conversion of a payload node into the N node of its site
* ``D``   drag flow into the next lower shell, same species and inclination bin
* ``PMD`` failed disposal, payload node into the N node of its site
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .breakup import BreakupModel, default_model, route_fragments, synthesize_from_parents
from .decay import DensityModel, default_density, drag_step, orbit_averaged_density
from .domain import (DAYS_PER_YEAR, N_SPECIES, SECONDS_PER_DAY, NetworkState, Population, SimConfig,
                     SiteGrid, SpeciesClass)
from .engine import node_stats, pair_rates, pair_table

P, U, N, F = (int(s) for s in SpeciesClass)
EDGE_KINDS = ("C", "F", "SC", "D", "PMD")


# ---------------------------------------------------------------- flow tensor

@dataclass
class FlowEntry:
    fractions: np.ndarray  # per destination site (F node), length n_sites
    remainder: float  # reentered + escaped + unbound share
    mean_count: float  # fragments per breakup

    @property
    def total(self) -> float:
        return float(self.fractions.sum() + self.remainder)


def _canonical(site_i: int, rb_i: bool, site_l: int, rb_l: bool) -> tuple:
    return tuple(sorted([(int(site_i), bool(rb_i)), (int(site_l), bool(rb_l))]))


@dataclass
class FlowTensor:
    """Average share of fragments from a heavy catastrophic breakup landing in each F node.

    Entries are keyed by the two colliding sites and whether each parent is a
    rocket body (the only species property the breakup model sees).  Missing
    entries are synthesized on demand by :meth:`ensure`.
    """

    grid: SiteGrid
    n_rep: int = 10
    parent_mass: float = 20000.0
    lc_min: float = 0.1
    entries: dict = field(default_factory=dict)
    model: BreakupModel | None = None

    def key_for_nodes(self, node_i: int, node_l: int) -> tuple:
        si, spi = divmod(int(node_i), N_SPECIES)
        sl, spl = divmod(int(node_l), N_SPECIES)
        return _canonical(si, spi == U, sl, spl == U)

    def entry(self, node_i: int, node_l: int) -> FlowEntry:
        return self.entries[self.key_for_nodes(node_i, node_l)]

    def xi(self, node_i: int, node_l: int) -> np.ndarray:
        """Fractions over destination F nodes (indexed by site) for a collision of two nodes."""
        return self.entry(node_i, node_l).fractions

    def ensure(self, keys, rng: np.random.Generator) -> None:
        for key in keys:
            if key not in self.entries:
                self.entries[key] = _synthesize_entry(key, self, rng)

    def to_arrays(self) -> dict:
        keys = sorted(self.entries)
        return {
            "keys": np.array([[k[0][0], k[0][1], k[1][0], k[1][1]] for k in keys], dtype=np.int64).reshape(-1, 4),
            "fractions": np.array([self.entries[k].fractions for k in keys]).reshape(len(keys), self.grid.n_sites),
            "remainder": np.array([self.entries[k].remainder for k in keys]),
            "mean_count": np.array([self.entries[k].mean_count for k in keys]),
            "meta": np.array([self.n_rep, self.parent_mass, self.lc_min]),
            "alt_edges": self.grid.alt_edges,
            "inc_edges": self.grid.inc_edges,
            "r_earth": np.array([self.grid.r_earth]),
        }

    def save(self, path) -> None:
        np.savez_compressed(path, **self.to_arrays())

    @classmethod
    def load(cls, path) -> "FlowTensor":
        z = np.load(path)
        grid = SiteGrid(z["alt_edges"], z["inc_edges"], float(z["r_earth"][0]))
        n_rep, mass, lc = z["meta"]
        out = cls(grid, int(n_rep), float(mass), float(lc))
        for k, fr, rem, mc in zip(z["keys"], z["fractions"], z["remainder"], z["mean_count"]):
            out.entries[_canonical(k[0], k[1], k[2], k[3])] = FlowEntry(fr.copy(), float(rem), float(mc))
        return out


def _synthesize_entry(key, tensor: FlowTensor, rng: np.random.Generator) -> FlowEntry:
    grid = tensor.grid
    model = tensor.model or default_model()
    (si, rbi), (sl, rbl) = key
    shell = si // grid.n_inc
    m = tensor.parent_mass
    # a compact 20 t object: radius only bounds the largest fragment
    radius = 2.0
    counts = np.zeros(grid.n_sites)
    gone = 0
    total = 0
    for _ in range(tensor.n_rep):
        rc = grid.r_earth + rng.uniform(grid.alt_edges[shell], grid.alt_edges[shell + 1])
        inc = [rng.uniform(grid.site(s).inc_lo, grid.site(s).inc_hi) for s in (si, sl)]
        parents = Population.from_arrays(
            object_id=[0, 1], species=[U if rbi else N, U if rbl else N], a=[rc, rc], e=0.0, inc=inc,
            mass=m, radius=radius, area=np.pi * radius**2)
        frag = synthesize_from_parents(parents, 10.0, True, 2 * m, tensor.lc_min, rng, rc, model).fragments
        site = route_fragments(frag, grid, rng)
        inside = site >= 0
        counts += np.bincount(site[inside], minlength=grid.n_sites)
        gone += int((~inside).sum())
        total += len(frag)
    if total == 0:
        return FlowEntry(np.zeros(grid.n_sites), 1.0, 0.0)
    return FlowEntry(counts / total, gone / total, total / tensor.n_rep)


def _needed_keys(grid: SiteGrid, node_i, node_j, tensor: FlowTensor) -> list:
    return sorted({tensor.key_for_nodes(a, b) for a, b in zip(node_i, node_j)})


def precompute_flow_tensor(grid: SiteGrid, rng: np.random.Generator, n_rep: int = 10,
                           parent_mass: float = 20000.0, lc_min: float = 0.1, node_pairs=None,
                           model: BreakupModel | None = None) -> FlowTensor:
    """Fragment-share tensor for every same-shell node pair (or only ``node_pairs``)."""
    tensor = FlowTensor(grid, n_rep, parent_mass, lc_min, model=model)
    if node_pairs is None:
        table = pair_table(grid)
        node_i, node_j = table.node_i, table.node_j
    else:
        node_pairs = np.asarray(list(node_pairs), dtype=np.int64).reshape(-1, 2)
        node_i, node_j = node_pairs[:, 0], node_pairs[:, 1]
    tensor.ensure(_needed_keys(grid, node_i, node_j, tensor), rng)
    return tensor


# ---------------------------------------------------------------- links

def link_probability(chi, dt_days: float):
    """Probability of at least one event in ``dt_days`` for a rate ``chi`` per day."""
    chi = np.asarray(chi, dtype=float)
    if np.any(chi < 0) or np.any(np.isnan(chi)):
        raise ValueError("rates must be non-negative")
    out = -np.expm1(-chi * dt_days)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class Edge:
    src: int
    dst: int
    kind: str
    chi: float  # per day
    p: float

    @property
    def src_species(self) -> str:
        return SpeciesClass(self.src % N_SPECIES).name

    @property
    def dst_species(self) -> str:
        return SpeciesClass(self.dst % N_SPECIES).name

    @property
    def src_site(self) -> int:
        return self.src // N_SPECIES

    @property
    def dst_site(self) -> int:
        return self.dst // N_SPECIES


@dataclass
class LinkSet:
    edges: list
    grid: SiteGrid
    dt_days: float
    epoch: float = 0.0

    def __len__(self) -> int:
        return len(self.edges)

    def aggregated(self) -> dict:
        """Connection strength per (src, dst): the largest probability among its edge kinds."""
        out: dict = {}
        for e in self.edges:
            k = (e.src, e.dst)
            if e.p > out.get(k, -1.0):
                out[k] = e.p
        return out

    def by_kind(self, kind: str) -> list:
        return [e for e in self.edges if e.kind == kind]

    def adjacency(self) -> np.ndarray:
        A = np.zeros((self.grid.n_nodes, self.grid.n_nodes))
        for (s, d), p in self.aggregated().items():
            A[s, d] = p
        return A


def _drag_edges(pop: Population, grid: SiteGrid, density: DensityModel, epoch: float, dt_days: float,
                mu: float) -> dict:
    """Expected number of members per node whose semi-major-axis shell drops within one step."""
    if len(pop) == 0:
        return {}
    rho = orbit_averaged_density(pop.a, pop.e, density.profile(epoch), grid.r_earth)
    a1, _, dead = drag_step(pop.a, pop.e, pop.cd, pop.area / pop.mass, rho, dt_days * SECONDS_PER_DAY, mu)
    sh0 = grid.shell_index(pop.a - grid.r_earth)
    sh1 = grid.shell_index(np.where(dead, grid.r_earth, a1) - grid.r_earth)
    src_shell = pop.site // grid.n_inc
    drop = ~dead & (sh1 < sh0) & (sh1 >= 0) & (src_shell > 0)
    src = grid.node_index(pop.species.astype(np.int64), pop.site)[drop]
    dst = src - grid.n_inc * N_SPECIES
    out: dict = {}
    for s, d in zip(src.tolist(), dst.tolist()):
        out[(s, d)] = out.get((s, d), 0.0) + 1.0
    return out


def compute_link_rates(state: NetworkState, config: SimConfig, tensor: FlowTensor | None = None,
                       density: DensityModel | None = None, rng: np.random.Generator | None = None) -> LinkSet:
    """Directed edges with per-day rates and one-step probabilities for a state snapshot.

    Missing flow-tensor entries are synthesized with ``rng`` (default seed from ``config``).
    """
    grid = state.grid
    dt = config.dt_days
    pop = state.population
    if len(pop) == 0:
        return LinkSet([], grid, dt, state.epoch)
    rng = rng if rng is not None else np.random.default_rng(config.rng_seed)
    tensor = tensor if tensor is not None else FlowTensor(grid, lc_min=config.lc_min_m)
    table = pair_table(grid)
    tau, _ = pair_rates(node_stats(pop, grid), table, config.mu)
    live = np.flatnonzero(tau > 0)
    tau_star = (1.0 - config.s_cam) ** table.n_payload * tau
    kappa_tau = config.kappa * tau * table.pf

    edges: list[Edge] = []

    def add(src, dst, kind, chi):
        if chi > 0:
            edges.append(Edge(int(src), int(dst), kind, float(chi), link_probability(chi, dt)))

    fflow = np.zeros((grid.n_nodes, grid.n_sites))
    sc = np.zeros(grid.n_nodes)
    tensor.ensure(_needed_keys(grid, table.node_i[live], table.node_j[live], tensor), rng)
    for p in live:
        ki, kj = int(table.node_i[p]), int(table.node_j[p])
        chi_c = tau_star[p] + kappa_tau[p]
        add(ki, kj, "C", chi_c)
        if ki != kj:
            add(kj, ki, "C", chi_c)
        if tau_star[p] > 0:
            xi = tensor.xi(ki, kj)
            fflow[ki] += tau_star[p] * xi
            if ki != kj:
                fflow[kj] += tau_star[p] * xi
        if kappa_tau[p] > 0:
            sc[ki if table.sp_i[p] == P else kj] += kappa_tau[p]

    src_nodes, dst_sites = np.nonzero(fflow)
    for s, j in zip(src_nodes, dst_sites):
        add(s, j * N_SPECIES + F, "F", fflow[s, j])
    for s in np.flatnonzero(sc):
        add(s, s - P + N, "SC", sc[s])

    for (s, d), eps in sorted(_drag_edges(pop, grid, density or default_density(), state.epoch, dt,
                                          config.mu).items()):
        add(s, d, "D", eps / dt)

    # failed disposals expected within the next step, per payload node
    dt_years = dt / DAYS_PER_YEAR
    eol = (pop.species == P) & (pop.age >= config.mission_lifetime_years - dt_years)
    if eol.any():
        n_eol = np.bincount(grid.node_index(P, pop.site[eol]), minlength=grid.n_nodes)
        for s in np.flatnonzero(n_eol):
            add(s, s - P + N, "PMD", config.gamma * n_eol[s] / dt)
    return LinkSet(edges, grid, dt, state.epoch)


def subnetwork(links: LinkSet, rho_link: float) -> LinkSet:
    """Edges whose (src, dst) connection strength is at least ``rho_link`` (and nonzero)."""
    if rho_link < 0:
        raise ValueError("threshold must be non-negative")
    agg = links.aggregated()
    keep = [e for e in links.edges if agg[(e.src, e.dst)] >= rho_link and agg[(e.src, e.dst)] > 0]
    return LinkSet(keep, links.grid, links.dt_days, links.epoch)


def weighted_degrees(links: LinkSet) -> tuple[np.ndarray, np.ndarray]:
    """Per-node (in, out) sums of connection strength over incoming / outgoing links."""
    n = links.grid.n_nodes
    d_in = np.zeros(n)
    d_out = np.zeros(n)
    agg = links.aggregated()
    if agg:
        pairs = np.array(list(agg.keys()), dtype=np.int64)
        w = np.array(list(agg.values()))
        np.add.at(d_out, pairs[:, 0], w)
        np.add.at(d_in, pairs[:, 1], w)
    return d_in, d_out


def top_nodes(links: LinkSet, k: int = 5, direction: str = "in") -> list[tuple[int, float]]:
    d_in, d_out = weighted_degrees(links)
    d = d_in if direction == "in" else d_out
    order = np.argsort(-d, kind="stable")[:k]
    return [(int(i), float(d[i])) for i in order]
