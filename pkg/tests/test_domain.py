import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from debrisnet.domain import (R_EARTH_KM, N_SPECIES, NetworkState, OutOfDomain, Population, SimConfig,
                              SiteGrid, SpaceObject, SpeciesClass, node_volume, site_of)


def grid10():
    return SiteGrid.uniform(10.0, 10.0)


def test_species_enum():
    assert [s.name for s in SpeciesClass] == ["P", "U", "N", "F"]
    assert N_SPECIES == 4
    assert SpeciesClass.parse("f") is SpeciesClass.F


def test_site_of_examples():
    g = grid10()
    s = site_of(R_EARTH_KM + 805.0, 95.0, g)
    assert (s.alt_lo, s.alt_hi, s.inc_lo, s.inc_hi) == (800.0, 810.0, 90.0, 100.0)
    assert site_of(R_EARTH_KM + 199.0, 30.0, g) is OutOfDomain.REENTERED
    assert site_of(R_EARTH_KM + 2300.0, 30.0, g) is OutOfDomain.ESCAPED
    # lower edges belong to the bin above
    s = site_of(R_EARTH_KM + 800.0, 90.0, g)
    assert (s.alt_lo, s.inc_lo) == (800.0, 90.0)
    # the top edges are closed
    s = site_of(R_EARTH_KM + 2200.0, 180.0, g)
    assert (s.alt_hi, s.inc_hi) == (2200.0, 180.0)


def test_node_volume_examples():
    g = SiteGrid(np.array([7000.0 - R_EARTH_KM, 7050.0 - R_EARTH_KM]), np.array([0.0, 60.0, 90.0, 180.0]))
    v90 = 4 * math.pi / 3 * (7050.0**3 - 7000.0**3)
    assert v90 == pytest.approx(3.103e10, rel=1e-3)
    # [0,60]: sin 60
    assert node_volume(g.site(0)) == pytest.approx(v90 * math.sin(math.radians(60)), rel=1e-12)
    # [60,90] contains 90
    assert node_volume(g.site(1)) == pytest.approx(v90, rel=1e-12)


def test_node_volume_above_90_uses_supplement():
    g = SiteGrid(np.array([500.0, 550.0]), np.array([0.0, 30.0, 150.0, 180.0]))
    assert node_volume(g.site(2)) == pytest.approx(node_volume(g.site(0)), rel=1e-12)


@given(st.floats(0.0, 89.0))
def test_symmetric_bins_equal_volume(x):
    g = SiteGrid(np.array([500.0, 550.0]), np.unique([0.0, x, 90.0, 180.0 - x, 180.0]))
    lo = [s for s in g.sites if s.inc_lo == x and s.inc_hi == 90.0]
    hi = [s for s in g.sites if s.inc_lo == 90.0 and s.inc_hi == 180.0 - x]
    if lo and hi:
        assert node_volume(lo[0]) == pytest.approx(node_volume(hi[0]), rel=1e-12)


@given(st.floats(1.0, 200.0), st.floats(1.0, 200.0))
def test_volume_monotone_in_thickness(dr1, dr2):
    lo, hi = sorted((dr1, dr2))
    v = [node_volume(SiteGrid(np.array([600.0, 600.0 + d]), np.array([0.0, 180.0])).site(0)) for d in (lo, hi)]
    assert v[0] <= v[1]


@given(st.lists(st.tuples(st.floats(150.0, 2300.0), st.floats(0.0, 180.0)), min_size=1, max_size=200))
def test_binning_is_partition(pts):
    g = SiteGrid.uniform(50.0, 60.0)
    alt = np.array([p[0] for p in pts])
    inc = np.array([p[1] for p in pts])
    idx = g.site_index(R_EARTH_KM + alt, inc)
    inside = (alt >= 200.0) & (alt <= 2200.0)
    assert np.all((idx >= 0) == inside)
    assert np.bincount(idx[idx >= 0], minlength=g.n_sites).sum() == inside.sum()
    for k in np.flatnonzero(inside):
        s = g.site(int(idx[k]))
        assert s.alt_lo <= alt[k] <= s.alt_hi and s.inc_lo <= inc[k] <= s.inc_hi


def test_space_object_invariants():
    SpaceObject(1, "P", 7000.0, 0.0, 50.0, 100.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        SpaceObject(1, "P", 7000.0, 1.2, 50.0, 100.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        SpaceObject(1, "P", 6000.0, 0.0, 50.0, 100.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        SpaceObject(1, "P", 7000.0, 0.0, 50.0, -1.0, 1.0, 1.0)


def test_simconfig_validation():
    with pytest.raises(ValueError):
        SimConfig(s_cam=1.5)
    with pytest.raises(ValueError):
        SimConfig(dt_days=0.0)
    with pytest.raises(ValueError):
        SimConfig(n_size_bins=0)
    c = SimConfig()
    assert c.n_steps == round(100 * 365.25 / 30)
    assert SimConfig.from_mapping(c.to_mapping()) == c


def test_state_node_index_bijection():
    g = SiteGrid.uniform(200.0, 60.0)
    pop = Population.from_arrays(object_id=np.arange(8), species=np.arange(8) % 4,
                                 a=R_EARTH_KM + np.linspace(300, 2100, 8), e=0.0, inc=np.linspace(5, 175, 8),
                                 mass=1.0, radius=0.1, area=0.03)
    s = NetworkState.from_population(pop, g)
    ids = s.node_ids()
    assert len(np.unique(ids)) == 8
    sites, sp = np.divmod(ids, N_SPECIES)
    assert np.array_equal(sp, pop.species)
    assert s.node_counts().sum() == 8
    assert s.node(SpeciesClass(int(sp[0])), int(sites[0])).n == 1
