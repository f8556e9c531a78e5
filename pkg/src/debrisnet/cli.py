"""Command-line entry point: ``debrisnet <subcommand> [options]``."""
from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np
import yaml

from . import io as dio

# CLI flag -> SimConfig field
_OVERRIDES = {"seed": "rng_seed", "dt_days": "dt_days", "shell_km": "shell_km", "inc_deg": "inc_deg",
              "scam": "s_cam", "gamma": "gamma", "kappa": "kappa", "lifetime_years": "mission_lifetime_years",
              "horizon_years": "horizon_years"}


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="YAML config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--dt-days", type=float)
    p.add_argument("--shell-km", type=float)
    p.add_argument("--inc-deg", type=float)
    p.add_argument("--scam", type=float, help="CAM success fraction")
    p.add_argument("--gamma", type=float, help="PMD failure fraction")
    p.add_argument("--kappa", type=float, help="small-collision factor")
    p.add_argument("--lifetime-years", type=float)
    p.add_argument("--horizon-years", type=float)
    p.add_argument("--out", type=Path, default=Path("out"))


def _config(args):
    overrides = {v: getattr(args, k, None) for k, v in _OVERRIDES.items()}
    return dio.load_config(args.config, overrides)


def _models(raw: dict, launch_flag: str | None = None):
    from .decay import DensityModel
    from .engine import Models
    from .launch import LaunchModel

    atm = dict(raw.get("atmosphere") or {})
    density = DensityModel(**atm)
    launch_cfg = raw.get("launch")
    if launch_flag is not None:
        launch_cfg = None if launch_flag == "none" else {"preset": launch_flag}
    launch = None
    if launch_cfg:
        if "preset" in launch_cfg:
            launch = LaunchModel.preset(launch_cfg["preset"])
        else:
            launch = LaunchModel.from_mapping(launch_cfg)
    return Models(density=density, launch=launch)


def cmd_simulate(args) -> int:
    from .engine import run_monte_carlo
    from .report import write_report

    cfg, raw = _config(args)
    runs = args.runs or int((raw.get("runs") or {}).get("n_runs", 1))
    models = _models(raw, args.launch)
    pop = dio.load_population(args.catalog) if args.catalog else dio.load_sample_catalog()
    chash = dio.config_hash(cfg, raw, runs, str(args.catalog or "sample"))

    def progress(r):
        print(f"run {r + 1}/{runs} done", file=sys.stderr)

    stats = run_monte_carlo(cfg, pop, runs, models, keep_final=args.save_final, progress=progress)
    written = dio.export_results(stats, out_dir=args.out, config_hash_value=chash)
    if args.save_final:
        dio.write_population(stats.runs[0].final_state.population, args.out / "final_population.csv",
                             dio.provenance_line(chash))
        written.append(args.out / "final_population.csv")
    if not args.no_plots:
        written += write_report(args.out, stats=stats)
    last = stats.mean[-1]
    print(f"final mean P={last[0]:.1f} U={last[1]:.1f} N={last[2]:.1f} F={last[3]:.1f} "
          f"catastrophic={stats.catastrophic_mean[-1]:.2f}")
    for p in written:
        print(p)
    return 0


def cmd_network(args) -> int:
    from .domain import NetworkState
    from .netanalysis import FlowTensor, compute_link_rates, subnetwork, top_nodes
    from .report import write_report

    cfg, raw = _config(args)
    models = _models(raw)
    grid = cfg.grid()
    pop = dio.load_population(args.catalog) if args.catalog else dio.load_sample_catalog()
    rng = np.random.default_rng(cfg.rng_seed)
    state = NetworkState.from_population(pop, grid, args.epoch, rng)
    tensor = FlowTensor.load(args.tensor) if args.tensor else FlowTensor(grid, lc_min=cfg.lc_min_m)
    links = compute_link_rates(state, cfg, tensor, models.density, rng)
    sub = subnetwork(links, args.rho)
    chash = dio.config_hash(cfg, raw, args.epoch, args.rho, str(args.catalog or "sample"))
    written = dio.export_results(links=sub, out_dir=args.out, config_hash_value=chash)
    if not args.no_plots:
        written += write_report(args.out, links=sub)
    for direction in ("in", "out"):
        tops = ", ".join(f"{grid.node_label(k)}={d:.3f}" for k, d in top_nodes(sub, 5, direction))
        print(f"top {direction}-degree: {tops}")
    for p in written:
        print(p)
    return 0


def cmd_capacity(args) -> int:
    from .capacity import CapacityModel1D, extract_coefficients, phase_portrait
    from .report import write_report

    steps = args.ensemble / "steps.csv" if args.ensemble.is_dir() else args.ensemble
    meta, _ = dio.read_table(steps)
    traces = dio.read_traces(steps)
    window = tuple(args.window) if args.window else None
    model = extract_coefficients(traces, args.mode, window)
    chash = dio.config_hash(meta.get("config_hash", ""), args.mode, window)
    grid_data = None
    if not isinstance(model, CapacityModel1D):
        xs = [eq.x for eq in model.equilibria] + [max(t["x"].max() for t in traces)]
        ys = [eq.y for eq in model.equilibria] + [max(t["y"].max() for t in traces)]
        grid_data = phase_portrait(model, (0.0, 1.5 * max(xs)), (0.0, 1.5 * max(max(ys), 1.0)), args.grid)
    written = dio.export_results(capacity=model, out_dir=args.out, config_hash_value=chash, phase_grid=grid_data)
    if not args.no_plots:
        written += write_report(args.out, capacity=model, phase_grid=grid_data)
    for k, v in model.coefficients().items():
        print(f"{k} = {v:.6g}")
    for eq in getattr(model, "equilibria", []) or []:
        print(f"equilibrium x={eq.x:.6g} y={eq.y:.6g} {eq.stability}")
    for p in written:
        print(p)
    return 0


def cmd_flow_tensor(args) -> int:
    from .netanalysis import precompute_flow_tensor

    cfg, _ = _config(args)
    grid = cfg.grid()
    rng = np.random.default_rng(cfg.rng_seed)
    pairs = None
    if args.shells:
        from .domain import N_SPECIES
        from .engine import pair_table

        table = pair_table(grid)
        shell = table.node_i // (grid.n_inc * N_SPECIES)
        sel = np.isin(shell, args.shells)
        pairs = np.column_stack([table.node_i[sel], table.node_j[sel]])
    tensor = precompute_flow_tensor(grid, rng, args.n_rep, lc_min=cfg.lc_min_m, node_pairs=pairs)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    tensor.save(args.out)
    print(f"{len(tensor.entries)} entries -> {args.out}")
    return 0


def _read_columns(path) -> dict:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(line for line in fh if not line.startswith("#")))
    return {k: np.array([r[k] for r in rows]) for k in (rows[0] if rows else {})}


def cmd_fit_launch(args) -> int:
    from .launch import fit_launch_model

    rec = _read_columns(args.objects)
    yearly = None
    if args.yearly:
        y = _read_columns(args.yearly)
        yearly = (y["year"].astype(float), y["count"].astype(float))
    model = fit_launch_model(rec, yearly, np.random.default_rng(args.seed or 0), args.k_orbital,
                             args.k_physical, args.terms)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    with open(args.out, "w") as fh:
        yaml.safe_dump(model.to_mapping(), fh, sort_keys=True)
    print(f"launch model -> {args.out}")
    return 0


def cmd_validate(args) -> int:
    from .validation import run_all

    checks = run_all(args.seed or 0, quick=args.quick)
    for c in checks:
        print(c.line())
    return 0 if all(c.ok for c in checks) else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="debrisnet", description="LEO debris network simulator")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="Monte Carlo ensemble from a catalog")
    _common(p)
    p.add_argument("--catalog", type=Path, help="catalog CSV (default: bundled 2023 sample)")
    p.add_argument("--runs", type=int)
    p.add_argument("--launch", help="traffic preset (LM-1, LM-2, LM-3) or 'none'")
    p.add_argument("--save-final", action="store_true", help="also write run 0's final population")
    p.add_argument("--no-plots", action="store_true")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("network", help="links and weighted degrees of a population snapshot")
    _common(p)
    p.add_argument("--catalog", type=Path)
    p.add_argument("--rho", type=float, default=0.0, help="link probability threshold")
    p.add_argument("--epoch", type=float, default=0.0, help="years since start (sets solar phase)")
    p.add_argument("--tensor", type=Path, help="precomputed flow tensor (.npz)")
    p.add_argument("--no-plots", action="store_true")
    p.set_defaults(func=cmd_network)

    p = sub.add_parser("capacity", help="fit mean-field coefficients from an ensemble export")
    p.add_argument("ensemble", type=Path, help="output dir of 'simulate' or its steps.csv")
    p.add_argument("--mode", choices=("1d", "2d"), default="1d")
    p.add_argument("--window", type=float, nargs=2, metavar=("T0", "T1"))
    p.add_argument("--grid", type=int, default=41)
    p.add_argument("--out", type=Path, default=Path("out"))
    p.add_argument("--no-plots", action="store_true")
    p.set_defaults(func=cmd_capacity)

    p = sub.add_parser("flow-tensor", help="precompute fragment-share tensor")
    _common(p)
    p.add_argument("--n-rep", type=int, default=10)
    p.add_argument("--shells", type=int, nargs="*", help="only these shell indices")
    p.set_defaults(func=cmd_flow_tensor, out=Path("flow_tensor.npz"))

    p = sub.add_parser("fit-launch", help="fit traffic curve and mixtures to historical records")
    p.add_argument("objects", type=Path, help="CSV: class,a_km,i_deg,mass_kg,area_m2,length_m")
    p.add_argument("--yearly", type=Path, help="CSV: year,count")
    p.add_argument("--k-orbital", type=int, default=3)
    p.add_argument("--k-physical", type=int, default=1)
    p.add_argument("--terms", type=int, default=1)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", type=Path, default=Path("launch_model.yaml"))
    p.set_defaults(func=cmd_fit_launch)

    p = sub.add_parser("validate", help="run the built-in oracle checks")
    p.add_argument("--seed", type=int)
    p.add_argument("--quick", action="store_true")
    p.set_defaults(func=cmd_validate)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
