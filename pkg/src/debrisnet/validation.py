"""Independent reference computations and the built-in consistency checks run by ``validate``.

Each oracle recomputes a quantity the slow, obvious way so the fast paths in
the library can be compared against it.
"""
from __future__ import annotations

import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.integrate import solve_ivp

from .domain import MU_KM3_S2, R_EARTH_KM

# ---------------------------------------------------------------- oracles


def brute_sigma_self(d) -> float:
    """Mean of pi/4 (d_i + d_j)^2 over unordered pairs i < j (m^2)."""
    d = np.asarray(d, dtype=float)
    i, j = np.triu_indices(len(d), k=1)
    return float(np.mean(np.pi / 4 * (d[i] + d[j]) ** 2))


def brute_sigma_cross(d_i, d_j) -> float:
    d_i = np.asarray(d_i, dtype=float)[:, None]
    d_j = np.asarray(d_j, dtype=float)[None, :]
    return float(np.mean(np.pi / 4 * (d_i + d_j) ** 2))


def sample_shell_population(rng, n: int, inc_lo: float, inc_hi: float, alt_lo: float = 800.0,
                            alt_hi: float = 810.0, e_max: float = 0.1, r_earth: float = R_EARTH_KM):
    """Objects currently in a thin shell: radius r, eccentricity e, random true anomaly.

    Returns (r, a, e, inc_deg, raan, gamma) with gamma the flight-path angle.
    """
    r = r_earth + rng.uniform(alt_lo, alt_hi, n)
    e = rng.uniform(0.0, e_max, n)
    nu = rng.uniform(0.0, 2 * np.pi, n)
    a = r * (1 + e * np.cos(nu)) / (1 - e * e)
    inc = rng.uniform(inc_lo, inc_hi, n)
    raan = rng.uniform(0.0, 2 * np.pi, n)
    gamma = np.arctan2(e * np.sin(nu), 1 + e * np.cos(nu))
    return r, a, e, inc, raan, gamma


def pairwise_relative_velocity(A, B, mu: float = MU_KM3_S2, flight_path: bool = False) -> float:
    """Average |v_i - v_j| over all pairs, each pair meeting on its mutual line of nodes.

    At the crossing point both velocity vectors are perpendicular to the node
    line and their horizontal parts meet at the angle between the orbit
    normals.  By default the speeds are treated as horizontal; with
    ``flight_path=True`` the radial components from the flight-path angles are
    kept as well.
    """
    r_a, a_a, _, i_a, O_a, g_a = A
    r_b, a_b, _, i_b, O_b, g_b = B
    v_a = np.sqrt(mu * (2 / r_a - 1 / a_a))[:, None]
    v_b = np.sqrt(mu * (2 / r_b - 1 / a_b))[None, :]
    ia, ib = np.radians(i_a)[:, None], np.radians(i_b)[None, :]
    c = np.sin(ia) * np.sin(ib) * np.cos(O_a[:, None] - O_b[None, :]) + np.cos(ia) * np.cos(ib)
    ga, gb = g_a[:, None], g_b[None, :]
    if not flight_path:
        ga, gb = 0.0 * ga, 0.0 * gb
    dot = np.cos(ga) * np.cos(gb) * c + np.sin(ga) * np.sin(gb)
    return float(np.sqrt(np.maximum(v_a**2 + v_b**2 - 2 * v_a * v_b * dot, 0.0)).mean())


def gauss_drag_oracle(a0: float, e0: float, cd: float, am: float, rho: float, t_s: float,
                      mu: float = MU_KM3_S2, n_quad: int = 256):
    """Integrate orbit-averaged Gauss equations for drag at constant density. Returns (a, e)."""
    from .decay import solve_kepler

    B = cd * am
    M = (np.arange(n_quad) + 0.5) * np.pi / n_quad
    mu_m = mu * 1e9

    def rhs(_, z):
        a, e = z
        a_m = a * 1e3
        E = solve_kepler(M, np.full_like(M, max(e, 0.0)))
        r = a_m * (1 - e * np.cos(E))
        v = np.sqrt(mu_m * (2 / r - 1 / a_m))
        cos_nu = (np.cos(E) - e) / (1 - e * np.cos(E))
        return [np.mean(-(a_m**2) * B * rho * v**3 / mu_m) / 1e3, np.mean(-B * rho * v * (e + cos_nu))]

    sol = solve_ivp(rhs, (0.0, t_s), [a0, e0], method="DOP853", rtol=1e-10, atol=1e-12)
    return float(sol.y[0, -1]), float(sol.y[1, -1])


def kepler_grid_weights(a: float, e: float, alt_edges, n: int = 400_000, r_earth: float = R_EARTH_KM):
    """Time-in-shell fractions from a uniform mean-anomaly grid and Newton-solved radii."""
    M = (np.arange(n) + 0.5) * np.pi / n
    E = M.copy()
    for _ in range(60):
        E = E - (E - e * np.sin(E) - M) / (1 - e * np.cos(E))
    r = a * (1 - e * np.cos(E))
    edges = np.asarray(alt_edges, dtype=float) + r_earth
    counts, _ = np.histogram(r, bins=edges)
    inside = counts.sum()
    return counts / inside if inside else counts.astype(float)


# ---------------------------------------------------------------- checks


@dataclass
class Check:
    name: str
    ok: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.ok else 'FAIL'}  {self.name}: {self.detail}"


def check_cross_sections(rng) -> Check:
    from .collision import sigma_cross_from_sums, sigma_self_from_sums

    worst = 0.0
    for _ in range(20):
        d = rng.uniform(0.02, 6.0, rng.integers(2, 200))
        g = rng.uniform(0.02, 6.0, rng.integers(1, 200))
        fast_s = float(sigma_self_from_sums(len(d), d.sum(), (d * d).sum()))
        fast_c = float(sigma_cross_from_sums(len(d), d.sum(), (d * d).sum(), len(g), g.sum(), (g * g).sum()))
        worst = max(worst, abs(fast_s / brute_sigma_self(d) - 1), abs(fast_c / brute_sigma_cross(d, g) - 1))
    return Check("cross-section closed form vs brute force", worst < 1e-12, f"max rel err {worst:.2e}")


def check_poisson(rng, n_draws: int = 1_000_000) -> Check:
    from .collision import sample_jump

    rate, dt = 2.5e-3, 30.0
    draws = np.fromiter((sample_jump(rate, dt, rng) for _ in range(n_draws)), dtype=np.int64, count=n_draws)
    lam = rate * dt
    z = (draws.mean() - lam) / np.sqrt(lam / n_draws)
    return Check("Poisson jump mean", abs(z) <= 3.0, f"mean {draws.mean():.5f} vs {lam:.5f} (z={z:+.2f})")


def check_drag() -> Check:
    from .decay import drag_step

    a1, e1, _ = drag_step(7000.0, 0.01, 2.2, 0.02, 0.0, 1e8)
    ident = a1 == 7000.0 and e1 == 0.01
    worst = 0.0
    for a0, e0, rho, days in ((6878.0, 0.0, 1e-12, 365.0), (6878.0, 0.01, 1e-12, 365.0),
                              (7178.0, 0.05, 1e-13, 3650.0)):
        t = days * 86400.0
        ao, _ = gauss_drag_oracle(a0, e0, 2.2, 0.01, rho, t)
        ac, _, _ = drag_step(a0, e0, 2.2, 0.01, rho, t)
        worst = max(worst, abs(ac - ao) / abs(ao - a0))
    return Check("drag step vs averaged Gauss equations", ident and worst <= 0.01,
                 f"rho=0 identity {ident}, max rel err of decay {worst:.2e}")


def check_residence() -> Check:
    from .decay import residence_weights

    edges = np.arange(200.0, 2201.0, 50.0)
    worst = 0.0
    for a_alt, e in ((800.0, 0.05), (1200.0, 0.12), (600.0, 0.01), (1500.0, 0.0)):
        a = R_EARTH_KM + a_alt
        w = residence_weights(a, e, edges).weights
        worst = max(worst, float(np.abs(w - kepler_grid_weights(a, e, edges)).max()))
    return Check("residence weights vs Kepler grid", worst <= 1e-3, f"max abs diff {worst:.2e}")


def check_bookkeeping(rng) -> Check:
    from .catalog import synthetic_catalog
    from .domain import NetworkState, SimConfig
    from .engine import Models, step

    cfg = SimConfig(dt_days=365.25, shell_km=100.0, inc_deg=60.0, s_cam=0.0, kappa=50.0)
    grid = cfg.grid()
    pop = synthetic_catalog(seed=7, totals={"P": 400, "U": 200, "N": 200, "F": 1500})
    state = NetworkState.from_population(pop, grid, 0.0, rng)
    worst = 0
    for _ in range(3):
        before = state.node_counts().astype(float)
        state, rep = step(state, cfg, Models(), rng)
        worst = max(worst, int(np.abs(state.node_counts() - before - rep.net()).max()))
    return Check("per-step node bookkeeping", worst == 0, f"max node mismatch {worst}")


def check_mass(rng) -> Check:
    from .breakup import classify_masses, synthesize_from_parents
    from .domain import Population

    worst = 0.0
    over = 0.0
    for m1, m2, dv in ((1200.0, 5.0, 10.0), (20000.0, 20000.0, 10.0), (800.0, 0.5, 1.0), (300.0, 300.0, 0.2)):
        cat, M = classify_masses(m1, m2, dv)
        parents = Population.from_arrays(object_id=[1, 2], species=[1, 3], a=7178.0, e=0.0, inc=[98.0, 60.0],
                                         mass=[m1, m2], radius=[1.5, 0.1], area=[7.0, 0.03])
        frag = synthesize_from_parents(parents, dv, cat, M, 0.1, rng, 7178.0).fragments
        if cat:
            worst = max(worst, abs(frag.mass.sum() - M) / M)
        else:
            over = max(over, frag.mass.sum() / min(M, m1 + m2) - 1.0)
    return Check("breakup mass budget", worst <= 1e-9 and over <= 1e-12,
                 f"catastrophic max rel err {worst:.2e}, non-catastrophic relative excess {over:.2e}")


def check_handshake(rng) -> Check:
    from .catalog import synthetic_catalog
    from .domain import NetworkState, SimConfig
    from .netanalysis import FlowTensor, compute_link_rates, weighted_degrees

    cfg = SimConfig(dt_days=30.0, shell_km=200.0, inc_deg=60.0, s_cam=0.0)
    grid = cfg.grid()
    pop = synthetic_catalog(seed=3, totals={"P": 300, "U": 100, "N": 100, "F": 600})
    state = NetworkState.from_population(pop, grid, 0.0, rng)
    links = compute_link_rates(state, cfg, FlowTensor(grid, n_rep=1), rng=rng)
    d_in, d_out = weighted_degrees(links)
    total = sum(links.aggregated().values())
    err = max(abs(d_in.sum() - total), abs(d_out.sum() - total)) / max(total, 1e-300)
    return Check("degree handshake", err <= 1e-12, f"sum in {d_in.sum():.6f}, sum out {d_out.sum():.6f}")


def check_export_determinism() -> Check:
    from .catalog import synthetic_catalog
    from .domain import SimConfig
    from .engine import run_monte_carlo
    from .io import config_hash, export_results

    cfg = SimConfig(dt_days=365.25, horizon_years=3.0, shell_km=200.0, inc_deg=60.0, rng_seed=11)
    pop = synthetic_catalog(seed=5, totals={"P": 200, "U": 50, "N": 50, "F": 300})
    blobs = []
    with tempfile.TemporaryDirectory() as tmp:
        for k in range(2):
            stats = run_monte_carlo(cfg, pop, 2)
            paths = export_results(stats, out_dir=Path(tmp) / str(k), config_hash_value=config_hash(cfg))
            blobs.append([p.read_bytes() for p in sorted(paths)])
    return Check("seeded export byte equality", blobs[0] == blobs[1], f"{len(blobs[0])} files compared")


def relative_velocity_table(seed: int = 0, n: int = 200):
    """Rows (bin_i, bin_j, approximated, pairwise) for the three reference bin pairs."""
    from .collision import representative_speed, relative_speed

    rng = np.random.default_rng(seed)
    rows = []
    r_l = R_EARTH_KM + 805.0
    for bi, bj in (((0, 10), (0, 10)), ((0, 10), (170, 180)), ((60, 70), (110, 120))):
        A = sample_shell_population(rng, n, *bi)
        B = sample_shell_population(rng, n, *bj)
        approx = float(relative_speed(representative_speed(A[1].mean(), r_l),
                                      representative_speed(B[1].mean(), r_l), A[3].mean(), B[3].mean()))
        rows.append((bi, bj, approx, pairwise_relative_velocity(A, B)))
    return rows


def check_relative_velocity(seed: int = 0) -> Check:
    rows = relative_velocity_table(seed)
    worst = max(abs(ap / ex - 1) for _, _, ap, ex in rows)
    return Check("relative velocity approximation vs pairwise", worst < 0.10, f"max rel err {worst:.3f}")


def run_all(seed: int = 0, quick: bool = False) -> list[Check]:
    rng = np.random.default_rng(seed)
    checks = [check_cross_sections(rng), check_poisson(rng, 100_000 if quick else 1_000_000), check_drag(),
              check_residence(), check_bookkeeping(rng), check_mass(rng), check_handshake(rng),
              check_relative_velocity(seed)]
    if not quick:
        checks.append(check_export_determinism())
    return checks

