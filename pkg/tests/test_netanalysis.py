import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from debrisnet.catalog import synthetic_catalog
from debrisnet.decay import DensityModel
from debrisnet.domain import R_EARTH_KM, NetworkState, Population, SimConfig, SpeciesClass
from debrisnet.netanalysis import (Edge, FlowTensor, LinkSet, compute_link_rates, link_probability,
                                   precompute_flow_tensor, subnetwork, top_nodes, weighted_degrees)

P, U, N, F = (int(s) for s in SpeciesClass)
CFG = SimConfig(dt_days=30.0, shell_km=200.0, inc_deg=60.0, s_cam=0.0)
GRID = CFG.grid()


@pytest.fixture(scope="module")
def tensor():
    return FlowTensor(GRID, n_rep=2)


def two_node_state(n_p=30, n_f=200, alt=850.0):
    n = n_p + n_f
    pop = Population.from_arrays(object_id=np.arange(n), species=np.r_[np.full(n_p, P), np.full(n_f, F)],
                                 a=R_EARTH_KM + alt, e=0.0, inc=np.r_[np.full(n_p, 53.0), np.full(n_f, 40.0)],
                                 mass=np.r_[np.full(n_p, 260.0), np.full(n_f, 0.5)],
                                 radius=np.r_[np.full(n_p, 1.5), np.full(n_f, 0.2)], area=1.0)
    return NetworkState.from_population(pop, GRID)


def test_link_probability_examples():
    assert link_probability(0.0, 30.0) == 0.0
    assert link_probability(math.log(2) / 30.0, 30.0) == pytest.approx(0.5, rel=1e-14)
    assert link_probability(1e6, 30.0) == 1.0
    with pytest.raises(ValueError):
        link_probability(-1.0, 30.0)


@given(st.floats(0, 1e3), st.floats(0, 1e3), st.floats(0.1, 400))
def test_link_probability_monotone(c1, c2, dt):
    lo, hi = sorted((c1, c2))
    assert 0.0 <= link_probability(lo, dt) <= link_probability(hi, dt) <= 1.0


def test_empty_environment(tensor):
    links = compute_link_rates(NetworkState.from_population(Population.empty(), GRID), CFG, tensor)
    assert len(links) == 0
    d_in, d_out = weighted_degrees(links)
    assert not d_in.any() and not d_out.any()


def test_payload_and_fragment_node_edges(tensor):
    state = two_node_state()
    links = compute_link_rates(state, CFG, tensor, DensityModel.zero(), np.random.default_rng(0))
    site = int(state.population.site[0])
    p_node, f_node, n_node = site * 4 + P, site * 4 + F, site * 4 + N
    kinds = {(e.src, e.dst, e.kind) for e in links.edges}
    assert (p_node, f_node, "C") in kinds and (f_node, p_node, "C") in kinds
    assert (p_node, n_node, "SC") in kinds
    assert (p_node, f_node, "F") in kinds and (f_node, f_node, "F") in kinds
    assert not links.by_kind("D") and not links.by_kind("PMD")


def test_full_cam_removes_payload_collision_rates(tensor):
    state = two_node_state()
    base = compute_link_rates(state, CFG, tensor, DensityModel.zero(), np.random.default_rng(0))
    cam = SimConfig(dt_days=30.0, shell_km=200.0, inc_deg=60.0, s_cam=1.0)
    links = compute_link_rates(state, cam, tensor, DensityModel.zero(), np.random.default_rng(0))
    site = int(state.population.site[0])
    p_node, f_node = site * 4 + P, site * 4 + F
    c = {(e.src, e.dst): e.chi for e in links.by_kind("C")}
    sc = {e.src: e.chi for e in links.by_kind("SC")}
    # only the small-fragment term remains on the P-F link, and it ignores CAM
    assert c[(p_node, f_node)] == pytest.approx(sc[p_node], rel=1e-12)
    assert sc[p_node] == pytest.approx({e.src: e.chi for e in base.by_kind("SC")}[p_node], rel=1e-12)
    assert all(e.src != p_node for e in links.by_kind("F"))


@pytest.fixture(scope="module")
def baseline_links(tensor):
    pop = synthetic_catalog(seed=3, totals={"P": 300, "U": 100, "N": 100, "F": 600})
    state = NetworkState.from_population(pop, GRID, 0.0, np.random.default_rng(1))
    return compute_link_rates(state, CFG, tensor, rng=np.random.default_rng(2))


def test_subnetwork_thresholds(baseline_links):
    agg = baseline_links.aggregated()
    assert len(subnetwork(baseline_links, 0.0).aggregated()) == sum(p > 0 for p in agg.values())
    assert len(subnetwork(baseline_links, 1.0 + 1e-9)) == 0
    with pytest.raises(ValueError):
        subnetwork(baseline_links, -0.1)


@settings(max_examples=25)
@given(st.floats(0, 1), st.floats(0, 1))
def test_subnetwork_nested(baseline_links, r1, r2):
    lo, hi = sorted((r1, r2))
    a = set(subnetwork(baseline_links, lo).aggregated())
    b = set(subnetwork(baseline_links, hi).aggregated())
    assert b <= a


def test_degree_star():
    edges = [Edge(s, 7, "C", 1.0, 0.5) for s in (1, 2, 3)]
    links = LinkSet(edges, GRID, 30.0)
    d_in, d_out = weighted_degrees(links)
    assert d_in[7] == 1.5 and d_out[7] == 0.0
    assert d_in[0] == d_out[0] == 0.0
    assert top_nodes(links, 1, "in") == [(7, 1.5)]


def test_degree_uses_max_over_kinds():
    links = LinkSet([Edge(1, 2, "C", 1.0, 0.2), Edge(1, 2, "F", 1.0, 0.7)], GRID, 30.0)
    d_in, d_out = weighted_degrees(links)
    assert d_in[2] == 0.7 and d_out[1] == 0.7


def test_degree_handshake(baseline_links):
    d_in, d_out = weighted_degrees(baseline_links)
    assert d_in.sum() == pytest.approx(d_out.sum(), rel=1e-12)
    assert d_in.sum() == pytest.approx(sum(baseline_links.aggregated().values()), rel=1e-12)


def test_tensor_normalised_and_lowest_shell_loses_mass():
    rng = np.random.default_rng(0)
    low = (0 * GRID.n_inc + 1) * 4 + N
    high = (4 * GRID.n_inc + 1) * 4 + N
    t = precompute_flow_tensor(GRID, rng, n_rep=2, node_pairs=[(low, low), (high, high)])
    for e in t.entries.values():
        assert e.total == pytest.approx(1.0, abs=1e-12)
        assert np.all(e.fractions >= 0) and e.mean_count > 0
    assert t.entry(low, low).remainder > 0
    assert t.entry(low, low).remainder > t.entry(high, high).remainder


def test_tensor_save_load(tmp_path):
    t = precompute_flow_tensor(GRID, np.random.default_rng(1), n_rep=1, node_pairs=[(4 * 4 + U, 4 * 4 + F)])
    t.save(tmp_path / "t.npz")
    back = FlowTensor.load(tmp_path / "t.npz")
    assert back.entries.keys() == t.entries.keys()
    for k in t.entries:
        assert np.array_equal(back.entries[k].fractions, t.entries[k].fractions)
    assert back.n_rep == 1 and back.parent_mass == 20000.0
