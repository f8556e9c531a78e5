"""Collision breakup: fragment count, catastrophic test, fragment synthesis and routing."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources

import numpy as np

from .domain import (MU_KM3_S2, N_SPECIES, SITE_ESCAPED, SITE_REENTERED, OrbitSite, Population,
                     SiteGrid, SpaceObject, SpeciesClass)
from .orbits import coe_to_rv, rv_to_aei, true_anomaly_at_radius


@lru_cache(maxsize=None)
def _load_constants(path: str | None = None) -> dict:
    if path is None:
        text = (resources.files("debrisnet") / "data" / "breakup_sbm.json").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    return json.loads(text)


class BreakupModel:
    """Distribution constants for fragment synthesis, loaded from a JSON file."""

    def __init__(self, path: str | None = None):
        self.c = _load_constants(path)

    def _piecewise(self, family: str, name: str, lam):
        pts = np.asarray(self.c[family][name], dtype=float)
        return np.interp(lam, pts[:, 0], pts[:, 1])

    @property
    def emr_threshold(self) -> float:
        """Catastrophic threshold in J/kg."""
        return 1000.0 * self.c["catastrophic_emr_j_per_g"]

    def count(self, M, Lc):
        k = self.c["count"]
        return np.floor(k["coefficient"] * np.asarray(M, dtype=float) ** k["mass_exponent"]
                        * np.asarray(Lc, dtype=float) ** k["length_exponent"])

    @property
    def size_exponent(self) -> float:
        return -self.c["count"]["length_exponent"]

    def area(self, L):
        k = self.c["area"]
        L = np.asarray(L, dtype=float)
        return np.where(L < k["small_limit_m"], k["small_coefficient"] * L ** k["small_exponent"],
                        k["coefficient"] * L ** k["exponent"])

    def sample_log_am(self, L, rocket_body, rng: np.random.Generator):
        """log10(A/m) for each fragment of length L (m); ``rocket_body`` is a bool array."""
        L = np.asarray(L, dtype=float)
        lam = np.log10(L)
        n = len(L)
        rb = np.asarray(rocket_body, dtype=bool)
        large = np.empty(n)
        for fam, mask in (("rocket_body", rb), ("spacecraft", ~rb)):
            if not mask.any():
                continue
            lm = lam[mask]
            alpha = self._piecewise(fam, "alpha", lm)
            pick1 = rng.random(mask.sum()) < alpha
            mu = np.where(pick1, self._piecewise(fam, "mu1", lm), self._piecewise(fam, "mu2", lm))
            sd = np.where(pick1, self._piecewise(fam, "sigma1", lm), self._piecewise(fam, "sigma2", lm))
            large[mask] = rng.normal(mu, sd)
        small = rng.normal(self._piecewise("small", "mu", lam), self._piecewise("small", "sigma", lam))
        lo, hi = self.c["bridge_m"]
        w_large = np.clip((lam - math.log10(lo)) / (math.log10(hi) - math.log10(lo)), 0.0, 1.0)
        use_large = rng.random(n) < w_large
        return np.where(use_large, large, small)

    def sample_dv(self, log_am, rng: np.random.Generator):
        """Ejection speed (km/s) given log10(A/m)."""
        k = self.c["delta_v"]
        return 10 ** rng.normal(k["slope"] * np.asarray(log_am) + k["offset"], k["sigma"]) / 1000.0


_DEFAULT_MODEL = None


def default_model() -> BreakupModel:
    global _DEFAULT_MODEL
    if _DEFAULT_MODEL is None:
        _DEFAULT_MODEL = BreakupModel()
    return _DEFAULT_MODEL


def energy_to_mass_ratio(m_a: float, m_b: float, dv_kms: float) -> float:
    """Impact kinetic energy of the lighter body per unit mass of the heavier (J/kg)."""
    small, large = min(m_a, m_b), max(m_a, m_b)
    return 0.5 * small * (dv_kms * 1000.0) ** 2 / large


def classify_masses(m_a: float, m_b: float, dv_kms: float, model: BreakupModel | None = None):
    model = model or default_model()
    if m_a <= 0 or m_b <= 0 or dv_kms <= 0:
        raise ValueError("masses and dv must be positive")
    cat = energy_to_mass_ratio(m_a, m_b, dv_kms) >= model.emr_threshold
    M = m_a + m_b if cat else min(m_a, m_b) * dv_kms**2
    return bool(cat), float(M)


def classify_collision(obj_a: SpaceObject, obj_b: SpaceObject, dv: float,
                       model: BreakupModel | None = None) -> tuple[bool, float]:
    """(catastrophic, fragment mass M in kg) for a collision at ``dv`` km/s."""
    return classify_masses(obj_a.mass, obj_b.mass, dv, model)


def fragment_count(M: float, Lc: float, model: BreakupModel | None = None) -> int:
    if M <= 0 or Lc <= 0:
        raise ValueError("M and Lc must be positive")
    return int((model or default_model()).count(M, Lc))


@dataclass
class CollisionEvent:
    parents: tuple  # (SpaceObject, SpaceObject)
    dv: float  # km/s
    site: OrbitSite | None
    catastrophic: bool
    M: float = 0.0

    def __post_init__(self):
        if not self.dv > 0:
            raise ValueError("dv must be positive")

    @classmethod
    def from_parents(cls, a: SpaceObject, b: SpaceObject, dv: float, site: OrbitSite | None = None,
                     model: BreakupModel | None = None) -> "CollisionEvent":
        cat, M = classify_collision(a, b, dv, model)
        return cls((a, b), dv, site, cat, M)


@dataclass
class FragmentBatch:
    fragments: Population
    unbound: int = 0  # fragments ejected onto unbound orbits
    site_counts: dict = field(default_factory=dict)
    reentered: int = 0
    escaped: int = 0

    def __len__(self) -> int:
        return len(self.fragments)


def sample_lengths(n: int, Lc: float, L_max: float, beta: float, rng: np.random.Generator):
    """Inverse-CDF draw from the truncated power law N(>L) ~ L^-beta on [Lc, L_max]."""
    if L_max <= Lc:
        return np.full(n, Lc)
    u = rng.random(n)
    lo, hi = Lc ** -beta, L_max ** -beta
    return (lo - u * (lo - hi)) ** (-1.0 / beta)


def isotropic_directions(n: int, rng: np.random.Generator) -> np.ndarray:
    v = rng.normal(size=(n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def fix_masses(mass: np.ndarray, budget: float, catastrophic: bool, rng: np.random.Generator,
               k_range=(2, 8)) -> np.ndarray:
    """Scale fragment masses down to ``budget``; in catastrophic events top up the deficit."""
    mass = mass.copy()
    n = len(mass)
    if n == 0:
        return mass
    total = mass.sum()
    if total > budget:
        mass *= budget / total
    elif catastrophic and total < budget:
        k = int(min(n, rng.integers(k_range[0], k_range[1] + 1)))
        pick = rng.choice(n, size=k, replace=False)
        mass[pick] += (budget - total) / k
        # absorb rounding so the batch sums to the budget exactly
        mass[pick[0]] += budget - mass.sum()
    return mass


def synthesize_from_parents(parents: Population, dv: float, catastrophic: bool, M: float,
                            Lc: float, rng: np.random.Generator, collision_radius: float | None = None,
                            model: BreakupModel | None = None, mu: float = MU_KM3_S2,
                            first_id: int = 0) -> FragmentBatch:
    """Array core of :func:`synthesize_fragments`; ``parents`` holds exactly two objects."""
    model = model or default_model()
    n = int(model.count(M, Lc))
    if n <= 0:
        return FragmentBatch(Population.empty())
    L_max = float(2.0 * parents.radius.max())
    L = sample_lengths(n, Lc, max(L_max, Lc), model.size_exponent, rng)
    # each fragment inherits the orbit of one parent, chosen in proportion to mass
    w = parents.mass / parents.mass.sum()
    which = (rng.random(n) >= w[0]).astype(np.int64)
    rb = parents.species[which] == int(SpeciesClass.U)
    log_am = model.sample_log_am(L, rb, rng)
    area = model.area(L)
    mass = area / 10.0**log_am
    budget = parents.mass.sum() if catastrophic else min(M, parents.mass.sum())
    mass = fix_masses(mass, budget, catastrophic, rng, tuple(model.c["mass_fixup_fragments"]))
    ddv = model.sample_dv(log_am, rng)[:, None] * isotropic_directions(n, rng)

    # place both parents at a common collision radius with random orientation
    pa, pe, pi = parents.a, parents.e, np.radians(parents.inc)
    if collision_radius is None:
        collision_radius = float(np.mean(pa))
    nu = true_anomaly_at_radius(pa, pe, np.full(2, collision_radius), rng)
    raan = rng.uniform(0, 2 * np.pi, 2)
    argp = rng.uniform(0, 2 * np.pi, 2)
    r_par, v_par = coe_to_rv(pa, pe, pi, raan, argp, nu, mu)
    a, e, inc = rv_to_aei(r_par[which], v_par[which] + ddv, mu)
    bound = np.isfinite(a) & (e < 1.0)
    frag = Population.from_arrays(
        object_id=np.arange(first_id, first_id + n), species=int(SpeciesClass.F),
        a=np.where(bound, a, np.inf), e=np.where(bound, e, 0.0), inc=inc, mass=mass,
        radius=L / 2.0, area=area, cd=2.2, age=0.0)
    return FragmentBatch(frag, unbound=int((~bound).sum()))


def synthesize_fragments(event: CollisionEvent, Lc: float, rng: np.random.Generator,
                         model: BreakupModel | None = None, mu: float = MU_KM3_S2,
                         r_earth: float = 6378.137) -> FragmentBatch:
    parents = Population.from_objects(event.parents)
    rc = None
    if event.site is not None:
        rc = r_earth + rng.uniform(event.site.alt_lo, event.site.alt_hi)
    return synthesize_from_parents(parents, event.dv, event.catastrophic, event.M, Lc, rng, rc,
                                   model, mu)


def route_fragments(frag: Population, grid: SiteGrid, rng: np.random.Generator) -> np.ndarray:
    """Site id (or negative out-of-domain code) for each fragment via residence sampling."""
    from .decay import sample_residence_shell

    shell = sample_residence_shell(frag.a, frag.e, grid, rng)
    return np.where(shell >= 0, shell * grid.n_inc + grid.inc_bin(frag.inc), shell)


def assign_fragment_flows(batch: FragmentBatch, grid: SiteGrid, rng: np.random.Generator) -> dict:
    """Route fragments to F nodes; fills ``batch.site_counts`` ({site_id: count})."""
    site = route_fragments(batch.fragments, grid, rng)
    batch.fragments.site = site
    ids, cnt = np.unique(site[site >= 0], return_counts=True)
    batch.site_counts = {int(k): int(c) for k, c in zip(ids, cnt)}
    batch.reentered = int((site == SITE_REENTERED).sum())
    batch.escaped = int((site == SITE_ESCAPED).sum())
    return batch.site_counts


def f_node(site_id: int) -> int:
    return int(site_id) * N_SPECIES + int(SpeciesClass.F)
