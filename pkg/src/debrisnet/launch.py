"""Launch traffic curves, Gaussian mixture models and injection of new objects."""
from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources

import numpy as np
import yaml
from scipy.special import logsumexp

from .domain import Population, SiteGrid, SpeciesClass


@dataclass(frozen=True)
class TrafficTerm:
    A: float
    b: float
    c: float
    d: float
    t0: float

    def __post_init__(self):
        if not self.b > 0:
            raise ValueError("logistic term needs b > 0")


@dataclass(frozen=True)
class TrafficParams:
    n0: float
    terms: tuple = ()

    @classmethod
    def from_mapping(cls, data) -> "TrafficParams":
        return cls(float(data.get("n0", 0.0)),
                   tuple(TrafficTerm(**{k: float(v) for k, v in t.items()}) for t in data.get("terms", [])))

    def to_mapping(self) -> dict:
        return {"n0": self.n0, "terms": [vars(t).copy() for t in self.terms]}


def traffic_curve(t, params: TrafficParams):
    """Launch rate (objects per year) at calendar time ``t`` (years)."""
    t = np.asarray(t, dtype=float)
    out = np.full(t.shape, float(params.n0))
    for term in params.terms:
        dt = t - term.t0
        out = out + term.A * np.exp(term.d * dt) / (term.b + np.exp(-term.c * dt))
    return float(out) if out.ndim == 0 else out


def _presets() -> dict:
    text = (resources.files("debrisnet") / "data" / "launch_presets.yaml").read_text()
    return yaml.safe_load(text)


def traffic_preset(name: str) -> TrafficParams:
    """Named forecast (LM-1, LM-2, LM-3). Shapes only; not fitted to any data set."""
    presets = _presets()["traffic"]
    if name not in presets:
        raise KeyError(f"unknown traffic preset {name!r}; choose from {sorted(presets)}")
    return TrafficParams.from_mapping(presets[name])


@dataclass
class MixtureModel:
    weights: np.ndarray
    means: np.ndarray  # (k, d)
    covs: np.ndarray  # (k, d, d)
    log_likelihood_history: list = field(default_factory=list)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        self.means = np.atleast_2d(np.asarray(self.means, dtype=float))
        self.covs = np.asarray(self.covs, dtype=float).reshape(len(self.weights), self.means.shape[1],
                                                               self.means.shape[1])
        if np.any(self.weights <= 0) or not np.isclose(self.weights.sum(), 1.0):
            raise ValueError("mixture weights must be positive and sum to 1")

    @property
    def k(self) -> int:
        return len(self.weights)

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        comp = rng.choice(self.k, size=n, p=self.weights)
        out = np.empty((n, self.dim))
        for j in range(self.k):
            m = comp == j
            if m.any():
                out[m] = rng.multivariate_normal(self.means[j], self.covs[j], size=int(m.sum()),
                                                 method="eigh")
        return out

    def component_logpdf(self, X: np.ndarray) -> np.ndarray:
        return _component_logpdf(np.atleast_2d(X), self.means, self.covs) + np.log(self.weights)

    def logpdf(self, X) -> np.ndarray:
        return logsumexp(self.component_logpdf(X), axis=1)

    def to_mapping(self) -> dict:
        return {"weights": self.weights.tolist(), "means": self.means.tolist(), "covs": self.covs.tolist()}

    @classmethod
    def from_mapping(cls, data) -> "MixtureModel":
        return cls(data["weights"], data["means"], data["covs"])

    @classmethod
    def point_mass(cls, point) -> "MixtureModel":
        point = np.atleast_1d(np.asarray(point, dtype=float))
        return cls([1.0], [point], np.zeros((1, len(point), len(point))))


def _component_logpdf(X, means, covs):
    n, d = X.shape
    out = np.empty((n, len(means)))
    for j, (m, S) in enumerate(zip(means, covs)):
        L = np.linalg.cholesky(S)
        z = np.linalg.solve(L, (X - m).T)
        out[:, j] = -0.5 * (z * z).sum(axis=0) - np.log(np.diag(L)).sum() - 0.5 * d * np.log(2 * np.pi)
    return out


def fit_gmm(samples, k: int, rng: np.random.Generator, n_restarts: int = 5, tol: float = 1e-8,
            max_iter: int = 500, cov_floor: float = 1e-6) -> MixtureModel:
    """Expectation-maximization fit of a k-component full-covariance Gaussian mixture.

    Each restart is seeded from k distinct samples; the restart with the highest
    final log-likelihood wins. ``cov_floor`` (relative to the data variance) is
    added to every covariance diagonal.
    """
    X = np.asarray(samples, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n, d = X.shape
    if k < 1 or n < k:
        raise ValueError("need k >= 1 and at least k samples")
    reg = cov_floor * np.maximum(X.var(axis=0), 1e-300)
    best = None
    for _ in range(max(1, n_restarts)):
        means = X[rng.choice(n, size=k, replace=False)].copy()
        covs = np.repeat(np.diag(X.var(axis=0) + reg)[None], k, axis=0)
        weights = np.full(k, 1.0 / k)
        history = []
        prev = -np.inf
        for _ in range(max_iter):
            logp = _component_logpdf(X, means, covs) + np.log(weights)
            norm = logsumexp(logp, axis=1)
            ll = float(norm.sum())
            history.append(ll)
            resp = np.exp(logp - norm[:, None])
            nk = resp.sum(axis=0) + 10 * np.finfo(float).eps
            weights = nk / n
            means = resp.T @ X / nk[:, None]
            for j in range(k):
                D = X - means[j]
                covs[j] = (resp[:, j, None] * D).T @ D / nk[j] + np.diag(reg)
            if abs(ll - prev) < tol * max(1.0, abs(ll)):
                break
            prev = ll
        final = float(logsumexp(_component_logpdf(X, means, covs) + np.log(weights), axis=1).sum())
        history.append(final)
        if best is None or final > best[0]:
            best = (final, weights.copy(), means.copy(), covs.copy(), history)
    _, w, m, c, h = best
    return MixtureModel(w / w.sum(), m, c, h)


LAUNCH_CLASSES = ("P", "U", "mission")


@dataclass
class LaunchModel:
    """Per-class mixtures for orbit (a_km, i_deg) and physical (mass_kg, area_m2, length_m)."""

    traffic: TrafficParams
    class_proportions: dict
    orbital: dict  # class -> MixtureModel over (a, i)
    physical: dict  # class -> MixtureModel over (mass, area, length)
    start_year: float = 2023.0

    def __post_init__(self):
        tot = sum(self.class_proportions.values())
        if not np.isclose(tot, 1.0):
            raise ValueError("class proportions must sum to 1")

    def rate(self, epoch_years: float) -> float:
        return float(traffic_curve(self.start_year + epoch_years, self.traffic))

    @classmethod
    def from_mapping(cls, data) -> "LaunchModel":
        traffic = data["traffic"]
        if isinstance(traffic, str):
            traffic = traffic_preset(traffic)
        else:
            traffic = TrafficParams.from_mapping(traffic)
        return cls(traffic, {k: float(v) for k, v in data["class_proportions"].items()},
                   {k: MixtureModel.from_mapping(v) for k, v in data["orbital"].items()},
                   {k: MixtureModel.from_mapping(v) for k, v in data["physical"].items()},
                   float(data.get("start_year", 2023.0)))

    def to_mapping(self) -> dict:
        return {"traffic": self.traffic.to_mapping(), "class_proportions": dict(self.class_proportions),
                "orbital": {k: v.to_mapping() for k, v in self.orbital.items()},
                "physical": {k: v.to_mapping() for k, v in self.physical.items()},
                "start_year": self.start_year}

    @classmethod
    def preset(cls, traffic: str | TrafficParams = "LM-2") -> "LaunchModel":
        data = dict(_presets()["mixtures"])
        data["traffic"] = traffic if isinstance(traffic, str) else traffic.to_mapping()
        return cls.from_mapping(data)


def _sample_in_domain(mix: MixtureModel, n: int, grid: SiteGrid, rng, max_tries: int = 10):
    """Sample (a, i) pairs, redrawing out-of-domain ones a bounded number of times, then clamp."""
    X = mix.sample(n, rng)
    lo, hi = grid.r_earth + grid.alt_min, grid.r_earth + grid.alt_max
    for _ in range(max_tries):
        bad = (X[:, 0] < lo) | (X[:, 0] > hi) | (X[:, 1] < 0) | (X[:, 1] > 180)
        if not bad.any():
            break
        X[bad] = mix.sample(int(bad.sum()), rng)
    X[:, 0] = np.clip(X[:, 0], lo, hi - 1e-6)
    X[:, 1] = np.clip(X[:, 1], 0.0, 180.0)
    return X


def _sample_physical(mix: MixtureModel, n: int, rng, max_tries: int = 10):
    X = mix.sample(n, rng)
    for _ in range(max_tries):
        bad = (X <= 0).any(axis=1)
        if not bad.any():
            break
        X[bad] = mix.sample(int(bad.sum()), rng)
    floor = np.maximum(np.abs(mix.means).min(axis=0) * 1e-3, 1e-6)
    return np.maximum(X, floor)


def launch_cohort(model: LaunchModel, n_total: int, grid: SiteGrid, rng: np.random.Generator,
                  first_id: int = 0) -> Population:
    """Objects for one launch cohort of ``n_total``, split by class proportions."""
    classes = list(model.class_proportions)
    counts = rng.multinomial(n_total, [model.class_proportions[c] for c in classes])
    parts = []
    next_id = first_id
    for cls_name, n in zip(classes, counts):
        if n == 0:
            continue
        species = SpeciesClass.N if cls_name == "mission" else SpeciesClass.parse(cls_name)
        orb = _sample_in_domain(model.orbital[cls_name], int(n), grid, rng)
        phys = _sample_physical(model.physical[cls_name], int(n), rng)
        parts.append(Population.from_arrays(
            object_id=np.arange(next_id, next_id + n), species=int(species), a=orb[:, 0], e=0.0,
            inc=orb[:, 1], mass=phys[:, 0], area=phys[:, 1], radius=phys[:, 2] / 2.0, cd=2.2, age=0.0))
        next_id += int(n)
    pop = Population.concat(parts)
    return pop.assign_sites(grid) if len(pop) else pop


def inject_launches(state, t: float, dt_days: float, model: LaunchModel | None,
                    rng: np.random.Generator) -> np.ndarray:
    """Add a Poisson number of launched objects to ``state`` in place.

    ``t`` is the epoch in years since the simulation start. Returns the number
    of objects added per node.
    """
    grid = state.grid
    added = np.zeros(grid.n_nodes)
    if model is None:
        return added
    lam = model.rate(t) * dt_days / 365.25
    n = int(rng.poisson(lam)) if lam > 0 else 0
    if n == 0:
        return added
    cohort = launch_cohort(model, n, grid, rng, state.next_id)
    state.next_id += len(cohort)
    state.population = Population.concat([state.population, cohort])
    np.add.at(added, grid.node_index(cohort.species.astype(np.int64), cohort.site), 1)
    return added


def fit_traffic(years, rates, n_terms: int = 1, t0_guess: float | None = None) -> TrafficParams:
    """Least-squares fit of the logistic traffic curve to yearly launch counts.

    ``b`` is fixed at 1 (it only rescales ``A``); each term fits ``A, c, d, t0``.
    """
    from scipy.optimize import curve_fit

    t = np.asarray(years, dtype=float)
    y = np.asarray(rates, dtype=float)
    if len(t) < 2 + 4 * n_terms:
        raise ValueError("not enough points for the requested number of terms")
    t0_guess = float(np.median(t)) if t0_guess is None else t0_guess
    span = max(float(np.ptp(t)), 1.0)

    def model(tt, n0, *p):
        out = np.full_like(tt, n0)
        for k in range(n_terms):
            A, c, d, t0 = p[4 * k:4 * k + 4]
            out = out + A * np.exp(d * (tt - t0)) / (1.0 + np.exp(-c * (tt - t0)))
        return out

    p0 = [float(y.min())]
    lo, hi = [0.0], [np.inf]
    for k in range(n_terms):
        p0 += [float(np.ptp(y)) + 1.0, 4.0 / span, 0.0, t0_guess + k * span / (n_terms + 1)]
        lo += [0.0, 1e-3, -1.0, t.min() - span]
        hi += [np.inf, 10.0, 1.0, t.max() + 2 * span]
    popt, _ = curve_fit(model, t, y, p0=p0, bounds=(lo, hi), maxfev=20000)
    popt = [float(v) for v in popt]
    terms = tuple(TrafficTerm(A=popt[1 + 4 * k], b=1.0, c=popt[2 + 4 * k], d=popt[3 + 4 * k],
                              t0=popt[4 + 4 * k]) for k in range(n_terms))
    return TrafficParams(popt[0], terms)


def fit_launch_model(records: dict, yearly: tuple | None, rng: np.random.Generator, k_orbital: int = 3,
                     k_physical: int = 1, n_terms: int = 1) -> LaunchModel:
    """Build a launch model from historical object records.

    ``records`` maps column names (``class``, ``a_km``, ``i_deg``, ``mass_kg``,
    ``area_m2``, ``length_m``) to arrays; ``yearly`` is ``(years, counts)`` or
    None for a constant rate equal to the record count.
    """
    cls_col = np.asarray(records["class"]).astype(str)
    names = [c for c in LAUNCH_CLASSES if np.any(cls_col == c)]
    if not names:
        raise ValueError("no records of class P, U or mission")
    orbital, physical, props = {}, {}, {}
    for c in names:
        m = cls_col == c
        orb = np.column_stack([np.asarray(records[k], dtype=float)[m] for k in ("a_km", "i_deg")])
        phys = np.column_stack([np.asarray(records[k], dtype=float)[m] for k in ("mass_kg", "area_m2", "length_m")])
        orbital[c] = fit_gmm(orb, min(k_orbital, len(orb)), rng)
        physical[c] = fit_gmm(phys, min(k_physical, len(phys)), rng)
        props[c] = float(m.sum()) / len(cls_col)
    if yearly is None:
        traffic = TrafficParams(float(len(cls_col)))
    else:
        traffic = fit_traffic(yearly[0], yearly[1], n_terms)
    return LaunchModel(traffic, props, orbital, physical)
