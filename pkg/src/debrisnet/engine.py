"""Stochastic population stepper and Monte Carlo ensemble runner.

One step applies, in order: collisions between node pairs sharing a shell,
small-fragment collisions (P -> N), breakup and fragment routing, post-mission
disposal, active removal, drag decay with shell flows, and launches.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .breakup import BreakupModel, classify_masses, default_model, route_fragments, \
    synthesize_from_parents
from .collision import pair_matrix_from_members, relative_speed, representative_speed, \
    select_pair_indices, sigma_cross_from_sums, sigma_self_from_sums, M2_TO_KM2, NoPairError
from .decay import DensityModel, decay_population, default_density
from .domain import (DAYS_PER_YEAR, N_SPECIES, SECONDS_PER_DAY, CollisionCounters, NetworkState,
                     Population, SimConfig, SiteGrid, SpeciesClass)
from .launch import LaunchModel, inject_launches

P, U, N, F = (int(s) for s in SpeciesClass)
CAUSES = ("collision", "small_collision", "pmd_success", "pmd_fail", "adr", "decay_in", "decay_out",
          "launch", "fragment_inflow")
# per-step aggregate quantities kept for carrying-capacity extraction
TRACE_KEYS = ("x", "y", "dx_decay", "dx_FF", "dx_PP", "dx_PF", "dx_other", "dy_PP", "dy_PF",
              "dy_other", "dy_small", "dy_pmd", "dy_decay", "dy_launch", "n_cat", "n_noncat", "n_small")


@dataclass
class Models:
    density: DensityModel = field(default_factory=default_density)
    breakup: BreakupModel = field(default_factory=default_model)
    launch: LaunchModel | None = None


@dataclass(frozen=True, eq=False)
class PairTable:
    """All unordered node pairs sharing a shell (self pairs included)."""

    node_i: np.ndarray
    node_j: np.ndarray
    sp_i: np.ndarray
    sp_j: np.ndarray
    self_pair: np.ndarray
    volume: np.ndarray  # max of the two node volumes, km^3
    r_mid: np.ndarray  # shell mid radius, km
    n_payload: np.ndarray  # number of P participants (0, 1, 2)
    pf: np.ndarray  # one P and one F


@lru_cache(maxsize=16)
def pair_table(grid: SiteGrid) -> PairTable:
    m = grid.n_inc * N_SPECIES
    a, b = np.triu_indices(m)
    shells = np.arange(grid.n_shells)
    base = (shells * m)[:, None]
    ni = (base + a[None, :]).ravel()
    nj = (base + b[None, :]).ravel()
    vol_site = grid.volumes()
    vi = vol_site[ni // N_SPECIES]
    vj = vol_site[nj // N_SPECIES]
    spi, spj = ni % N_SPECIES, nj % N_SPECIES
    r_mid = grid.shell_mid_radius()[ni // N_SPECIES // grid.n_inc]
    return PairTable(ni, nj, spi, spj, ni == nj, np.maximum(vi, vj), r_mid,
                     (spi == P).astype(int) + (spj == P).astype(int),
                     ((spi == P) & (spj == F)) | ((spi == F) & (spj == P)))


@dataclass
class NodeStats:
    n: np.ndarray
    s1: np.ndarray
    s2: np.ndarray
    mean_a: np.ndarray
    mean_inc: np.ndarray


def node_stats(pop: Population, grid: SiteGrid) -> NodeStats:
    node = grid.node_index(pop.species.astype(np.int64), pop.site)
    nn = grid.n_nodes
    n = np.bincount(node, minlength=nn).astype(float)
    d = pop.diameter
    with np.errstate(invalid="ignore", divide="ignore"):
        mean_a = np.bincount(node, weights=pop.a, minlength=nn) / n
        mean_inc = np.bincount(node, weights=pop.inc, minlength=nn) / n
    return NodeStats(n, np.bincount(node, weights=d, minlength=nn),
                     np.bincount(node, weights=d * d, minlength=nn), mean_a, mean_inc)


def pair_rates(stats: NodeStats, table: PairTable, mu: float):
    """Collision rate per day and mean collision speed for every pair in ``table``."""
    i, j = table.node_i, table.node_j
    ni, nj = stats.n[i], stats.n[j]
    ok = (ni > 0) & (nj > 0)
    with np.errstate(invalid="ignore", divide="ignore"):
        vi = representative_speed(np.where(ok, stats.mean_a[i], 1.0), table.r_mid, mu)
        vj = representative_speed(np.where(ok, stats.mean_a[j], 1.0), table.r_mid, mu)
        dv = relative_speed(vi, vj, stats.mean_inc[i], stats.mean_inc[j])
    dv = np.where(ok, np.nan_to_num(dv), 0.0)
    sig_self = sigma_self_from_sums(ni, stats.s1[i], stats.s2[i])
    sig_cross = sigma_cross_from_sums(ni, stats.s1[i], stats.s2[i], nj, stats.s1[j], stats.s2[j])
    sigma = np.where(table.self_pair, sig_self, sig_cross) * M2_TO_KM2
    n_eff = np.where(table.self_pair, (ni - 1) / 2.0, nj)
    tau = np.where(ok, ni * n_eff * dv * sigma / table.volume * SECONDS_PER_DAY, 0.0)
    return np.maximum(tau, 0.0), dv


@dataclass
class CollisionRecord:
    node_i: int
    node_j: int
    species: tuple
    catastrophic: bool
    dv: float
    M: float
    n_fragments: int
    n_routed: int
    removed: tuple  # object ids removed


@dataclass
class StepReport:
    deltas: dict  # cause -> per-node signed change
    events: list
    trace: dict  # TRACE_KEYS -> scalar

    def net(self) -> np.ndarray:
        return sum(self.deltas.values())


def _pair_name(a: int, b: int) -> str:
    names = sorted((SpeciesClass(a).name, SpeciesClass(b).name), key=lambda s: "PUNF".index(s))
    return "".join(names)


class _Members:
    """Lazy per-node member lists (global row indices) with consumption tracking."""

    def __init__(self, node: np.ndarray):
        self.order = np.argsort(node, kind="stable")
        sorted_nodes = node[self.order]
        self.node = node
        self._sorted = sorted_nodes
        self.used = np.zeros(len(node), dtype=bool)

    def live(self, k: int) -> np.ndarray:
        lo, hi = np.searchsorted(self._sorted, [k, k + 1])
        idx = self.order[lo:hi]
        return idx[~self.used[idx]]


def step(state: NetworkState, config: SimConfig, models: Models | None, rng: np.random.Generator):
    """Advance ``state`` by one time step. Returns ``(new_state, StepReport)``."""
    models = models or Models()
    grid = state.grid
    nn = grid.n_nodes
    dt = config.dt_days
    dt_years = dt / DAYS_PER_YEAR
    deltas = {c: np.zeros(nn) for c in CAUSES}
    trace = dict.fromkeys(TRACE_KEYS, 0.0)
    events: list[CollisionRecord] = []
    counters = CollisionCounters(**vars(state.counters))

    pop = state.population
    species = pop.species.astype(np.int64).copy()
    node = grid.node_index(species, pop.site)
    trace["x"] = float((species == F).sum())
    trace["y"] = float((species == P).sum())

    # (1)-(3) collisions, small collisions, breakup
    table = pair_table(grid)
    stats = node_stats(pop, grid)
    tau, dv = pair_rates(stats, table, config.mu)
    mult = (1.0 - config.s_cam) ** table.n_payload
    n_coll = rng.poisson(mult * tau * dt)
    n_small = rng.poisson(config.kappa * tau * dt * table.pf)
    fragments = []
    next_id = state.next_id
    pop = pop.copy()
    if n_coll.any() or n_small.any():
        members = _Members(node)
        removed = np.zeros(len(pop), dtype=bool)
        d_all = pop.diameter
        for p in np.flatnonzero(n_coll):
            ki, kj = int(table.node_i[p]), int(table.node_j[p])
            selfp = bool(table.self_pair[p])
            for _ in range(int(n_coll[p])):
                mi = members.live(ki)
                mj = mi if selfp else members.live(kj)
                if len(mi) < (2 if selfp else 1) or len(mj) < 1:
                    break
                psm = pair_matrix_from_members(d_all[mi], d_all[mj], config.n_size_bins, dv[p],
                                               table.volume[p], dt, selfp)
                try:
                    qi, qj = select_pair_indices(psm, rng)
                except NoPairError:
                    break
                gi, gj = int(mi[qi]), int(mj[qj])
                rec, lost, frag = _collide(pop, gi, gj, species, float(dv[p]), config, models, grid,
                                           rng, next_id, ki, kj)
                next_id += rec.n_fragments
                members.used[[gi, gj]] = True
                removed[lost] = True
                np.subtract.at(deltas["collision"], node[lost], 1)
                fragments.append(frag)
                np.add.at(deltas["fragment_inflow"], grid.node_index(F, frag.site), 1)
                counters.catastrophic += rec.catastrophic
                counters.non_catastrophic += not rec.catastrophic
                trace["n_cat" if rec.catastrophic else "n_noncat"] += 1
                name = _pair_name(species[gi], species[gj])
                key = name if name in ("FF", "PP", "PF") else "other"
                trace["dx_" + key] += len(frag) - int((species[lost] == F).sum())
                if key != "FF":
                    trace["dy_" + key] -= int((species[lost] == P).sum())
                events.append(rec)
        for p in np.flatnonzero(n_small):
            ki, kj = int(table.node_i[p]), int(table.node_j[p])
            kp, kf = (ki, kj) if table.sp_i[p] == P else (kj, ki)
            for _ in range(int(n_small[p])):
                mp, mf = members.live(kp), members.live(kf)
                if len(mp) == 0 or len(mf) == 0:
                    break
                psm = pair_matrix_from_members(d_all[mp], d_all[mf], config.n_size_bins, dv[p],
                                               table.volume[p], dt, False)
                try:
                    qp, _ = select_pair_indices(psm, rng)
                except NoPairError:
                    break
                g = int(mp[qp])
                members.used[g] = True  # a converted payload takes no further part this step
                species[g] = N
                deltas["small_collision"][kp] -= 1
                deltas["small_collision"][kp - P + N] += 1
                counters.small += 1
                trace["n_small"] += 1
                trace["dy_small"] -= 1
        pop.species = species.astype(np.int8)
        pop = pop.take(~removed)
        if fragments:
            pop = Population.concat([pop] + fragments)

    # (4) post-mission disposal
    eol = np.flatnonzero((pop.species == P) & (pop.age >= config.mission_lifetime_years))
    if len(eol):
        fail = rng.random(len(eol)) < config.gamma
        nodes_eol = grid.node_index(P, pop.site[eol])
        np.add.at(deltas["pmd_success"], nodes_eol[~fail], -1)
        np.add.at(deltas["pmd_fail"], nodes_eol[fail], -1)
        np.add.at(deltas["pmd_fail"], nodes_eol[fail] - P + N, 1)
        trace["dy_pmd"] -= len(eol)
        pop.species[eol[fail]] = N
        keep = np.ones(len(pop), dtype=bool)
        keep[eol[~fail]] = False
        pop = pop.take(keep)

    # (5) active debris removal, largest mass first
    pop = _apply_adr(pop, state.epoch, config, grid, deltas)

    # (6) drag decay and shell flows
    flows = decay_population(pop, grid, models.density, state.epoch, dt, rng, config.mu,
                             config.literal_circular_drag)
    deltas["decay_out"] -= flows.eps_minus
    deltas["decay_in"] += flows.eps_plus
    gone = flows.reentered | flows.escaped
    trace["dx_decay"] = -float(((pop.species == F) & gone).sum())
    trace["dy_decay"] = -float(((pop.species == P) & gone).sum())
    pop.a, pop.e, pop.site = flows.a, flows.e, flows.site
    pop = pop.take(~gone)

    new_state = NetworkState(state.epoch, pop, grid, counters, next_id)
    # (7) launches
    before = new_state.population.species == P
    deltas["launch"] += inject_launches(new_state, state.epoch, dt, models.launch, rng)
    trace["dy_launch"] = float((new_state.population.species == P).sum() - before.sum())

    new_state.population.age = new_state.population.age + dt_years
    new_state.epoch = state.epoch + dt_years
    return new_state, StepReport(deltas, events, trace)


def _collide(pop: Population, gi: int, gj: int, species, dv: float, config: SimConfig, models: Models,
             grid: SiteGrid, rng, first_id: int, ki: int, kj: int):
    """Classify one collision and synthesize its routed fragments.

    Returns ``(record, removed_rows, in_domain_fragments)``.
    """
    model = models.breakup
    m_i, m_j = float(pop.mass[gi]), float(pop.mass[gj])
    cat, M = classify_masses(m_i, m_j, dv, model)
    parents = pop.take(np.array([gi, gj]))
    parents.species = np.array([species[gi], species[gj]], dtype=np.int8)
    shell = int(pop.site[gi]) // grid.n_inc
    rc = grid.r_earth + rng.uniform(grid.alt_edges[shell], grid.alt_edges[shell + 1])
    frag = synthesize_from_parents(parents, dv, cat, M, config.lc_min_m, rng, rc, model, config.mu,
                                   first_id).fragments
    if len(frag):
        frag.site = route_fragments(frag, grid, rng)
    routed = frag.take(frag.site >= 0)
    lost = np.array([gi, gj] if cat else [gi if m_i <= m_j else gj], dtype=np.int64)
    rec = CollisionRecord(ki, kj, (SpeciesClass(species[gi]).name, SpeciesClass(species[gj]).name),
                          cat, dv, M, len(frag), len(routed), tuple(int(pop.object_id[g]) for g in lost))
    return rec, lost, routed


def _apply_adr(pop: Population, epoch: float, config: SimConfig, grid: SiteGrid, deltas) -> Population:
    rates = config.adr_per_year
    if not any(v > 0 for v in rates.values()):
        return pop
    k = int(round(epoch / config.dt_years))
    drop = []
    for name, r in rates.items():
        if r <= 0:
            continue
        n = int(np.floor((k + 1) * r * config.dt_years + 1e-9) - np.floor(k * r * config.dt_years + 1e-9))
        if n <= 0:
            continue
        cand = pop.species == int(SpeciesClass[name])
        if config.adr_sites is not None:
            cand &= np.isin(pop.site, np.asarray(config.adr_sites))
        idx = np.flatnonzero(cand)
        if len(idx) == 0:
            continue
        pick = idx[np.argsort(-pop.mass[idx], kind="stable")[:n]]
        np.add.at(deltas["adr"], grid.node_index(pop.species[pick].astype(np.int64), pop.site[pick]), -1)
        drop.append(pick)
    if not drop:
        return pop
    keep = np.ones(len(pop), dtype=bool)
    keep[np.concatenate(drop)] = False
    return pop.take(keep)


@dataclass
class RunResult:
    epochs: np.ndarray  # years since start, length n_steps + 1
    counts: np.ndarray  # (n_steps + 1, 4) species counts
    catastrophic: np.ndarray  # cumulative, length n_steps + 1
    total_collisions: np.ndarray
    small: np.ndarray
    trace: dict  # TRACE_KEYS -> per-step array (length n_steps)
    final_state: NetworkState | None = None
    snapshots: dict = field(default_factory=dict)  # epoch -> Population


def run(state: NetworkState, config: SimConfig, models: Models | None, rng: np.random.Generator,
        n_steps: int | None = None, snapshot_steps=(), on_step=None, keep_final: bool = True) -> RunResult:
    """Integrate one realization for ``n_steps`` steps (default: the configured horizon)."""
    models = models or Models()
    n_steps = config.n_steps if n_steps is None else int(n_steps)
    counts = np.zeros((n_steps + 1, N_SPECIES), dtype=np.int64)
    cat = np.zeros(n_steps + 1, dtype=np.int64)
    tot = np.zeros(n_steps + 1, dtype=np.int64)
    small = np.zeros(n_steps + 1, dtype=np.int64)
    trace = {k: np.zeros(n_steps) for k in TRACE_KEYS}
    snapshot_steps = set(snapshot_steps)
    snapshots = {}

    def record(k, s):
        counts[k] = s.species_counts()
        cat[k], tot[k], small[k] = s.counters.catastrophic, s.counters.total, s.counters.small
        if k in snapshot_steps:
            snapshots[round(s.epoch, 9)] = s.population.copy()

    record(0, state)
    for k in range(n_steps):
        state, rep = step(state, config, models, rng)
        for key, v in rep.trace.items():
            trace[key][k] = v
        record(k + 1, state)
        if on_step is not None:
            on_step(k, state, rep)
    epochs = np.arange(n_steps + 1) * config.dt_years
    return RunResult(epochs, counts, cat, tot, small, trace, state if keep_final else None, snapshots)


@dataclass
class EnsembleStats:
    epochs: np.ndarray
    mean: np.ndarray  # (n_epochs, 4)
    std: np.ndarray
    total_mean: np.ndarray
    total_std: np.ndarray
    catastrophic_mean: np.ndarray
    catastrophic_std: np.ndarray
    collisions_mean: np.ndarray
    collisions_std: np.ndarray
    n_runs: int
    runs: list = field(default_factory=list)

    @classmethod
    def from_runs(cls, runs: list[RunResult]) -> "EnsembleStats":
        C = np.stack([r.counts for r in runs]).astype(float)
        T = C.sum(axis=2)
        K = np.stack([r.catastrophic for r in runs]).astype(float)
        A = np.stack([r.total_collisions for r in runs]).astype(float)
        return cls(runs[0].epochs, C.mean(0), C.std(0), T.mean(0), T.std(0), K.mean(0), K.std(0),
                   A.mean(0), A.std(0), len(runs), runs)

    def species_mean(self, species) -> np.ndarray:
        return self.mean[:, int(SpeciesClass.parse(species))]

    def species_std(self, species) -> np.ndarray:
        return self.std[:, int(SpeciesClass.parse(species))]


def run_seeds(master_seed: int, n_runs: int) -> list[np.random.Generator]:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(master_seed).spawn(n_runs)]


def run_monte_carlo(config: SimConfig, initial_population: Population, n_runs: int,
                    models: Models | None = None, grid: SiteGrid | None = None,
                    n_steps: int | None = None, snapshot_steps=(), keep_final: bool = False,
                    progress=None) -> EnsembleStats:
    """Independent realizations from one initial population, seeded from ``config.rng_seed``."""
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    models = models or Models()
    grid = grid or config.grid()
    runs = []
    for r, rng in enumerate(run_seeds(config.rng_seed, n_runs)):
        state = NetworkState.from_population(initial_population, grid, 0.0, rng)
        runs.append(run(state, config, models, rng, n_steps, snapshot_steps, keep_final=keep_final))
        if progress is not None:
            progress(r)
    return EnsembleStats.from_runs(runs)
