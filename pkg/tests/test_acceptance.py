"""End-to-end acceptance runs; each test records one PASS/FAIL line for the terminal summary."""
import numpy as np
import pytest

from debrisnet.capacity import CapacityModel2D, bernoulli_solution, extract_coefficients, find_equilibria
from debrisnet.catalog import resample_fragments
from debrisnet.decay import DensityModel
from debrisnet.domain import R_EARTH_KM, NetworkState, Population, SimConfig, SpeciesClass
from debrisnet.engine import Models, run_monte_carlo
from debrisnet.io import load_sample_catalog
from debrisnet.launch import LaunchModel, MixtureModel, TrafficParams
from debrisnet.netanalysis import FlowTensor, compute_link_rates, top_nodes
from debrisnet.validation import relative_velocity_table, run_all

pytestmark = pytest.mark.slow


def record(log, tag, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'}  {tag}: {detail}"
    print(line)
    log.append(line)
    if not ok:
        pytest.fail(line, pytrace=False)


def traces_of(stats, dt_years):
    return [dict(r.trace, dt_years=dt_years) for r in stats.runs]


# ---------------------------------------------------------------- 1

REF_DV = (0.8390, 14.8850, 11.4403)


def test_c1_relative_velocity_table(acceptance_log):
    rows = relative_velocity_table(seed=0, n=200)
    parts, ok = [], True
    for (bi, bj, approx, exact), ref in zip(rows, REF_DV):
        e_ref, e_ex = abs(approx / ref - 1), abs(approx / exact - 1)
        ok &= e_ref <= 0.05 and e_ex <= 0.10
        parts.append(f"{bi}x{bj} approx={approx:.4f} ref={ref} ({e_ref:.1%}) pairwise={exact:.4f} ({e_ex:.1%})")
    record(acceptance_log, "C1 relative velocity", ok, "; ".join(parts))


# ---------------------------------------------------------------- 2

ROWS = {
    "base": dict(a=0.004728332083372, b=8.662467642990248e-08, c=1.175401267752297e-14,
                 d=9.428437648428035e-10, gamma=0.368578793358788, lam=0.0, e=2.003922397999517e-17,
                 f=2.316928055993169e-13),
    "cam99.99": dict(a=0.004226706317436, b=8.676619156862889e-08, c=1.224456162356393e-15,
                     d=9.606253682748494e-11, gamma=0.166677662732838, lam=3000.0, e=1.647891773627737e-17,
                     f=1.957039536003774e-13),
    "cam0": dict(a=0.022592560002365, b=6.214276689402071e-08, c=1.224460289412396e-07,
                 d=8.664860267617623e-07, gamma=0.166621505691604, lam=3000.0, e=1.647986448760241e-09,
                 f=1.790973469946202e-09),
}


def test_c2_equilibria(acceptance_log):
    eq = {k: find_equilibria(CapacityModel2D(**v)) for k, v in ROWS.items()}
    b = sorted((q.x, q.y) for q in eq["base"])
    ok_base = len(b) == 2 and b[0] == (0.0, 0.0) and abs(b[1][0] / 5.4584e4 - 1) <= 0.02 and b[1][1] == 0.0
    h = sorted((q.x, q.y) for q in eq["cam99.99"])
    ok_high = (len(h) == 2 and all(abs(y / 1.8e4 - 1) <= 0.02 for _, y in h) and h[0][0] <= 0.02 * 4.90e4
               and abs(h[1][0] / 4.90e4 - 1) <= 0.02)
    z = eq["cam0"]
    ok_zero = z.status == "none" or not any(q.x > 0 for q in z)
    fmt = lambda qs: ", ".join(f"({q.x:.4g}, {q.y:.4g}) {q.stability}" for q in qs) or "none"
    detail = (f"base [{fmt(eq['base'])}] {'ok' if ok_base else 'off'}; 99.99% [{fmt(eq['cam99.99'])}] "
              f"{'ok' if ok_high else 'off'}; 0% [{fmt(z)}] {'ok' if ok_zero else 'expected none'}")
    record(acceptance_log, "C2 equilibria", ok_base and ok_high and ok_zero, detail)


# ---------------------------------------------------------------- 3

@pytest.fixture(scope="module")
def baseline_ensemble():
    cfg = SimConfig(dt_days=30.0, horizon_years=100.0, shell_km=50.0, inc_deg=60.0, s_cam=0.9999, gamma=0.05,
                    kappa=5.3, rng_seed=2023)
    stats = run_monte_carlo(cfg, load_sample_catalog(), 30, Models(launch=None))
    return cfg, stats


def test_c3_baseline_evolution(acceptance_log, baseline_ensemble):
    _, stats = baseline_ensemble
    cat = stats.catastrophic_mean[-1]
    total = stats.total_mean[-1]
    ok = 25 <= cat <= 55 and abs(total / 23800 - 1) <= 0.25
    detail = (f"mean cumulative catastrophic {cat:.1f} (+/- {stats.catastrophic_std[-1]:.1f}) in [25, 55]; "
              f"final mean total {total:.0f} vs 23800 ({total / 23800 - 1:+.1%}, band 25%)")
    record(acceptance_log, "C3 baseline evolution", ok, detail)


def test_c3_capacity_ratio(acceptance_log, baseline_ensemble):
    cfg, stats = baseline_ensemble
    m = extract_coefficients(traces_of(stats, cfg.dt_years), "1d")
    ok = abs(m.K / 5.4584e4 - 1) <= 0.30
    detail = f"a={m.a:.4g}/yr b={m.b:.4g}/yr a/b={m.K:.4g} vs 5.4584e4 ({m.K / 5.4584e4 - 1:+.1%}, band 30%)"
    record(acceptance_log, "C3b baseline a/b", ok, detail)


# ---------------------------------------------------------------- 4

INITIAL_FRAGMENTS = (9804, 39020, 68628, 98040)


@pytest.fixture(scope="module")
def fragment_ensembles():
    # one node: a single 2000 km shell and a single 180 degree bin
    cfg = SimConfig(dt_days=365.25, horizon_years=60.0, shell_km=2000.0, inc_deg=180.0, rng_seed=4)
    source = load_sample_catalog()
    out = {}
    for k, n in enumerate(INITIAL_FRAGMENTS):
        pop = resample_fragments(source, n, np.random.default_rng(100 + k))
        c = SimConfig(**{**vars(cfg), "rng_seed": 40 + k})
        out[n] = run_monte_carlo(c, pop, 30, Models(launch=None))
    return cfg, out


def test_c4_capacity_divergence(acceptance_log, fragment_ensembles):
    cfg, ens = fragment_ensembles
    model = extract_coefficients([traces_of(s, cfg.dt_years) for s in ens.values()], "1d")
    K = model.K
    parts, ok = [f"a={model.a:.4g} b={model.b:.4g} K={K:.4g}"], True
    for n, s in ens.items():
        x = s.species_mean("F")
        sol = bernoulli_solution(model.a, model.b, float(n), s.epochs)
        finite = np.isfinite(sol.x)
        err = float(np.max(np.abs(x[finite] / sol.x[finite] - 1)))
        if n > K:
            shape_ok = bool(np.all(np.diff(x) > 0))
            regime = "diverges" if shape_ok else "does not grow"
        else:
            shape_ok = bool(x[-1] < x[0] and np.all(np.diff(x) <= 0.002 * x[0]))
            regime = "declines" if shape_ok else "does not decline"
        ok &= shape_ok and err <= 0.15
        parts.append(f"x0={n} {'>' if n > K else '<'} K {regime}, end {x[-1]:.0f}, max Bernoulli err {err:.1%}")
    straddle = min(INITIAL_FRAGMENTS) < K < max(INITIAL_FRAGMENTS)
    parts.append("K inside tested span" if straddle else "K outside tested span, no divergent case")
    record(acceptance_log, "C4 carrying capacity", ok and straddle, "; ".join(parts))


# ---------------------------------------------------------------- 5

def test_c5_property_suites(acceptance_log):
    checks = run_all(seed=0, quick=False)
    for c in checks:
        print(c.line())
    bad = [c.name for c in checks if not c.ok]
    detail = f"{len(checks) - len(bad)}/{len(checks)} checks pass" + (f"; failing: {', '.join(bad)}" if bad else "")
    record(acceptance_log, "C5 property suites", not bad, detail)


# ---------------------------------------------------------------- 6

def test_c6_payload_steady_state(acceptance_log):
    cfg = SimConfig(dt_days=365.25 / 4, horizon_years=50.0, shell_km=2000.0, inc_deg=180.0,
                    mission_lifetime_years=5.0, rng_seed=6)
    launch = LaunchModel(TrafficParams(3000.0), {"P": 1.0},
                         {"P": MixtureModel.point_mass([R_EARTH_KM + 800.0, 53.0])},
                         {"P": MixtureModel.point_mass([300.0, 4.0, 2.0])})
    stats = run_monte_carlo(cfg, Population.empty(), 30, Models(density=DensityModel.zero(), launch=launch))
    dt = cfg.dt_years
    Y = np.array([r.trace["y"] for r in stats.runs])
    removed = np.array([-(r.trace["dy_pmd"] + r.trace["dy_PP"] + r.trace["dy_PF"] + r.trace["dy_other"]
                          + r.trace["dy_small"]) for r in stats.runs])
    half = Y.shape[1] // 2
    g_hat = removed[:, half:].sum() / Y[:, half:].sum() / dt
    lam = np.mean([r.trace["dy_launch"] for r in stats.runs]) / dt
    t = stats.epochs
    analytic = lam / g_hat * (1 - np.exp(-g_hat * t))
    counts = np.array([r.counts[:, SpeciesClass.P] for r in stats.runs], dtype=float)
    win = t >= 6.0 / g_hat
    run_means = counts[:, win].mean(axis=1)
    se = run_means.std(ddof=1) / np.sqrt(len(run_means))
    gap = run_means.mean() - analytic[win].mean()
    ok = abs(gap) <= 3 * se
    detail = (f"lambda={lam:.1f}/yr gamma_hat={g_hat:.5f}/yr steady state {lam / g_hat:.1f}; "
              f"mean over t>={6 / g_hat:.1f} yr {run_means.mean():.1f} vs analytic {analytic[win].mean():.1f} "
              f"(gap {gap:+.1f}, 3 SE = {3 * se:.1f})")
    record(acceptance_log, "C6 payload steady state", ok, detail)


# ---------------------------------------------------------------- 7

def test_c7_centrality(acceptance_log):
    cfg = SimConfig(rng_seed=7)
    grid = cfg.grid()
    rng = np.random.default_rng(cfg.rng_seed)
    state = NetworkState.from_population(load_sample_catalog(), grid, 0.0, rng)
    links = compute_link_rates(state, cfg, FlowTensor(grid, lc_min=cfg.lc_min_m), rng=rng)

    def allowed(node):
        site, sp = divmod(node, 4)
        s = grid.site(site)
        return (SpeciesClass(sp).name in ("F", "N") and s.alt_lo >= 400 and s.alt_hi <= 1000
                and s.inc_lo <= 60 and s.inc_hi >= 120)

    parts, ok = [], True
    for direction in ("in", "out"):
        tops = top_nodes(links, 5, direction)
        bad = [grid.node_label(k) for k, _ in tops if not allowed(k)]
        ok &= not bad
        parts.append(f"top {direction}: " + ", ".join(f"{grid.node_label(k)}={d:.3f}" for k, d in tops)
                     + (f" (outside: {', '.join(bad)})" if bad else ""))
    record(acceptance_log, "C7 centrality", ok, "; ".join(parts))
