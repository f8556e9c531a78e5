"""Deterministic synthetic LEO catalog resembling the early-2023 tracked population.

Class totals are exact (5471 P, 1111 U, 2440 N, 9804 F).  Orbits and physical
properties follow coarse, hand-set distributions: a large constellation shell
near 550 km, sun-synchronous clusters, derelicts and rocket bodies spread over
600-1000 km, and a fragment cloud concentrated between 700 and 900 km at high
inclination.  It is a stand-in for a real catalog, not a reproduction of one.
"""
from __future__ import annotations

import numpy as np

from .domain import R_EARTH_KM, Population, SpeciesClass

CLASS_TOTALS = {"P": 5471, "U": 1111, "N": 2440, "F": 9804}
FRAGMENT_MEDIAN_L = 0.25


def debris_mass(radius_m):
    """Mass (kg) for a debris object of given radius, from a size-dependent bulk density."""
    r = np.asarray(radius_m, dtype=float)
    return 4.0 / 3.0 * np.pi * r**3 * 92.937 * (2.0 * r) ** -0.74


def _mix(rng, n, weights):
    return rng.choice(len(weights), size=n, p=np.asarray(weights) / np.sum(weights))


def _payloads(rng, n):
    comp = _mix(rng, n, [0.60, 0.11, 0.18, 0.11])
    alt = np.empty(n)
    inc = np.empty(n)
    mass = np.empty(n)
    radius = np.empty(n)
    # large constellation shell
    m = comp == 0
    k = m.sum()
    alt[m] = rng.normal(550.0, 8.0, k)
    inc[m] = rng.choice([53.0, 53.2, 70.0, 97.6], size=k, p=[0.6, 0.2, 0.08, 0.12]) + rng.normal(0, 0.05, k)
    mass[m] = rng.normal(300.0, 20.0, k)
    radius[m] = rng.normal(1.5, 0.1, k)
    # second constellation at 1200 km near-polar
    m = comp == 1
    k = m.sum()
    alt[m] = rng.normal(1200.0, 4.0, k)
    inc[m] = rng.normal(87.9, 0.05, k)
    mass[m] = rng.normal(150.0, 5.0, k)
    radius[m] = rng.normal(1.0, 0.05, k)
    # sun-synchronous
    m = comp == 2
    k = m.sum()
    alt[m] = rng.uniform(450.0, 700.0, k)
    inc[m] = rng.normal(97.6, 0.4, k)
    mass[m] = np.exp(rng.normal(np.log(100.0), 1.2, k))
    radius[m] = 0.6 * (mass[m] / 100.0) ** (1 / 3)
    # everything else
    m = comp == 3
    k = m.sum()
    alt[m] = rng.uniform(350.0, 1400.0, k)
    inc[m] = rng.uniform(0.0, 100.0, k)
    mass[m] = np.exp(rng.normal(np.log(300.0), 1.0, k))
    radius[m] = 0.8 * (mass[m] / 300.0) ** (1 / 3)
    e = rng.uniform(0.0, 0.002, n)
    age = rng.uniform(0.0, 5.0, n)
    return alt, e, inc, np.clip(mass, 1.0, None), np.clip(radius, 0.05, None), age


def _upper_stages(rng, n):
    alt = np.clip(rng.normal(800.0, 170.0, n), 350.0, 1800.0)
    inc = rng.choice([71.0, 74.0, 82.9, 98.0, 65.0, 51.6, 28.5, 7.0],
                     size=n, p=[0.18, 0.16, 0.22, 0.2, 0.08, 0.08, 0.05, 0.03]) + rng.normal(0, 0.3, n)
    e = np.minimum(rng.exponential(0.006, n), 0.08)
    mass = np.exp(rng.normal(np.log(1500.0), 0.6, n))
    radius = 2.4 * (mass / 1500.0) ** (1 / 3)
    return alt, e, np.clip(inc, 0, 180), mass, radius, np.zeros(n)


def _derelicts(rng, n):
    alt = np.clip(rng.normal(820.0, 220.0, n), 350.0, 2000.0)
    inc = rng.choice([74.0, 82.9, 98.0, 65.0, 86.4, 90.0, 56.0, 51.6, 30.0],
                     size=n, p=[0.15, 0.2, 0.25, 0.1, 0.1, 0.06, 0.06, 0.05, 0.03]) + rng.normal(0, 0.5, n)
    e = np.minimum(rng.exponential(0.003, n), 0.05)
    mass = np.exp(rng.normal(np.log(500.0), 0.9, n))
    radius = 1.5 * (mass / 500.0) ** (1 / 3)
    return alt, e, np.clip(inc, 0, 180), mass, np.clip(radius, 0.1, None), np.zeros(n)


def _fragments(rng, n):
    comp = _mix(rng, n, [0.6, 0.25, 0.05, 0.1])
    alt = np.empty(n)
    inc = np.empty(n)
    m = comp == 0  # dense debris band
    alt[m] = rng.normal(830.0, 60.0, m.sum())
    inc[m] = rng.choice([98.6, 86.4, 74.0, 82.9], size=m.sum(), p=[0.4, 0.2, 0.2, 0.2])
    m = comp == 1  # broader high-inclination debris
    alt[m] = rng.uniform(600.0, 1500.0, m.sum())
    inc[m] = rng.uniform(60.0, 120.0, m.sum())
    m = comp == 2  # lower debris from recent events
    alt[m] = rng.normal(550.0, 50.0, m.sum())
    inc[m] = rng.choice([82.6, 97.5], size=m.sum())
    m = comp == 3  # low-inclination remainder
    alt[m] = rng.uniform(500.0, 1800.0, m.sum())
    inc[m] = rng.uniform(0.0, 60.0, m.sum())
    inc = np.clip(inc + rng.normal(0, 1.0, n), 0.0, 180.0)
    alt = np.clip(alt, 350.0, 2100.0)
    a = R_EARTH_KM + alt
    # keep perigee above 300 km
    e_max = np.clip(1.0 - (R_EARTH_KM + 300.0) / a, 0.0, 0.1)
    e = np.minimum(rng.exponential(0.01, n), e_max)
    # tracked fragments: characteristic length lognormal around 25 cm, floored at 10 cm
    L = np.clip(np.exp(rng.normal(np.log(FRAGMENT_MEDIAN_L), 0.6, n)), 0.1, 3.0)
    radius = L / 2.0
    return alt, e, inc, debris_mass(radius), radius, np.zeros(n)


def synthetic_catalog(seed: int = 2023, totals: dict | None = None) -> Population:
    rng = np.random.default_rng(seed)
    totals = dict(CLASS_TOTALS if totals is None else totals)
    parts = []
    next_id = 1
    makers = {"P": _payloads, "U": _upper_stages, "N": _derelicts, "F": _fragments}
    for name in ("P", "U", "N", "F"):
        n = int(totals.get(name, 0))
        if n == 0:
            continue
        alt, e, inc, mass, radius, age = makers[name](rng, n)
        area = np.pi * radius**2
        parts.append(Population.from_arrays(
            object_id=np.arange(next_id, next_id + n), species=int(SpeciesClass[name]),
            a=R_EARTH_KM + alt, e=e, inc=inc, mass=mass, radius=radius, area=area, cd=2.2, age=age))
        next_id += n
    return Population.concat(parts)


def resample_fragments(pop: Population, n: int, rng: np.random.Generator, first_id: int = 1) -> Population:
    """Bootstrap ``n`` fragment records (fresh ids) from the fragments of ``pop``."""
    frag = pop.take(pop.species == int(SpeciesClass.F))
    out = frag.take(rng.integers(0, len(frag), n))
    out.object_id = np.arange(first_id, first_id + n)
    return out
