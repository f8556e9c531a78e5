"""Catalog and configuration ingestion, result export and provenance headers."""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .domain import R_EARTH_KM, Population, SimConfig, SpeciesClass, validate_fields

log = logging.getLogger(__name__)

CATALOG_FIELDS = ("object_id", "class", "a_km", "e", "i_deg", "mass_kg", "radius_m", "area_m2", "cd",
                  "age_years")
REQUIRED_FIELDS = CATALOG_FIELDS[:8]


class CatalogFormatError(ValueError):
    pass


@dataclass
class RowError:
    line: int
    message: str


def _comment_free(fh):
    for line in fh:
        if not line.startswith("#"):
            yield line


def read_catalog(path, r_earth: float = R_EARTH_KM) -> tuple[Population, list[RowError]]:
    """Parse a catalog CSV. Bad rows are skipped and reported with their line numbers."""
    path = Path(path)
    rows, errors = [], []
    with open(path, newline="") as fh:
        lines = list(fh)
    offset = 0
    while offset < len(lines) and lines[offset].startswith("#"):
        offset += 1
    reader = csv.DictReader(lines[offset:])
    header = reader.fieldnames
    if not header or any(f not in header for f in REQUIRED_FIELDS):
        raise CatalogFormatError(f"{path}: header must contain {', '.join(REQUIRED_FIELDS)}; got {header}")
    extra = [h for h in header if h not in CATALOG_FIELDS]
    if extra:
        log.warning("%s: ignoring unknown columns %s", path, extra)
    for lineno, rec in enumerate(reader, start=offset + 2):
        try:
            sp = SpeciesClass.parse(rec["class"])
            vals = [float(rec[k]) for k in ("a_km", "e", "i_deg", "mass_kg", "radius_m", "area_m2")]
            cd = float(rec["cd"]) if rec.get("cd") not in (None, "") else 2.2
            age = float(rec["age_years"]) if rec.get("age_years") not in (None, "") else 0.0
            oid = int(rec["object_id"])
        except (KeyError, ValueError, TypeError) as exc:
            errors.append(RowError(lineno, f"unparsable row: {exc}"))
            continue
        problems = validate_fields(*vals, r_earth=r_earth)
        if problems:
            errors.append(RowError(lineno, "; ".join(problems)))
            continue
        rows.append((oid, int(sp), *vals, cd, age))
    if not rows:
        return Population.empty(), errors
    cols = list(zip(*rows))
    pop = Population.from_arrays(object_id=cols[0], species=cols[1], a=cols[2], e=cols[3], inc=cols[4],
                                 mass=cols[5], radius=cols[6], area=cols[7], cd=cols[8], age=cols[9])
    return pop, errors


def load_population(path) -> Population:
    """Load a catalog, logging per-class counts and any rejected rows."""
    pop, errors = read_catalog(path)
    for err in errors:
        log.warning("%s:%d rejected: %s", path, err.line, err.message)
    log.info("%s: loaded %d objects %s", path, len(pop), pop.counts_by_species())
    return pop


def sample_catalog_path() -> Path:
    return Path(str(resources.files("debrisnet") / "data" / "catalog_2023_sample.csv"))


def load_sample_catalog() -> Population:
    return load_population(sample_catalog_path())


def write_population(pop: Population, path, header: str | None = None) -> None:
    with open(path, "w", newline="") as fh:
        if header:
            fh.write(header)
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CATALOG_FIELDS)
        for k in range(len(pop)):
            w.writerow([int(pop.object_id[k]), SpeciesClass(int(pop.species[k])).name,
                        repr(float(pop.a[k])), repr(float(pop.e[k])), repr(float(pop.inc[k])),
                        repr(float(pop.mass[k])), repr(float(pop.radius[k])), repr(float(pop.area[k])),
                        repr(float(pop.cd[k])), repr(float(pop.age[k]))])


# ---------------------------------------------------------------- configuration

def _flatten_config(data: dict) -> dict:
    """Map the nested config sections onto :class:`SimConfig` fields."""
    sections = {
        "simulation": {"dt_days": "dt_days", "horizon_years": "horizon_years", "rng_seed": "rng_seed",
                       "start_year": "start_year"},
        "grid": {"shell_km": "shell_km", "inc_deg": "inc_deg", "alt_min_km": "alt_min_km",
                 "alt_max_km": "alt_max_km"},
        "policy": {"s_cam": "s_cam", "gamma_pmd": "gamma", "kappa": "kappa",
                   "mission_lifetime_years": "mission_lifetime_years", "adr_per_year": "adr_per_year",
                   "adr_sites": "adr_sites"},
        "breakup": {"lc_min_m": "lc_min_m", "n_size_bins": "n_size_bins"},
        "physics": {"mu_km3_s2": "mu", "r_earth_km": "r_earth", "literal_circular_drag": "literal_circular_drag"},
    }
    flat = {}
    for sec, mapping in sections.items():
        body = data.get(sec) or {}
        unknown = set(body) - set(mapping)
        if unknown:
            raise ValueError(f"unknown keys in [{sec}]: {sorted(unknown)}")
        for k, v in body.items():
            flat[mapping[k]] = v
    return flat


def load_config(path=None, overrides: dict | None = None) -> tuple[SimConfig, dict]:
    """Read a YAML config. Returns the SimConfig plus the raw sections (atmosphere, launch, runs)."""
    data = {}
    if path is not None:
        with open(path) as fh:
            data = yaml.safe_load(fh) or {}
    known = {"simulation", "grid", "policy", "breakup", "physics", "atmosphere", "launch", "runs"}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown config sections: {sorted(unknown)}")
    flat = _flatten_config(data)
    flat.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return SimConfig.from_mapping(flat), data


def config_hash(*parts) -> str:
    """Short stable digest of JSON-serializable configuration pieces."""
    blob = json.dumps(parts, sort_keys=True, default=_json_default).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.integer, np.floating)):
        return o.item()
    if hasattr(o, "to_mapping"):
        return o.to_mapping()
    return str(o)


# ---------------------------------------------------------------- exports

def provenance_line(chash: str) -> str:
    return f"# config_hash={chash}\n"


def _open_out(out_dir: Path, name: str, chash: str):
    fh = open(out_dir / name, "w", newline="")
    fh.write(provenance_line(chash))
    return fh, csv.writer(fh, lineterminator="\n")


def _fmt(x) -> str:
    return repr(float(x))


def export_timeseries(stats, out_dir: Path, chash: str) -> Path:
    fh, w = _open_out(out_dir, "timeseries.csv", chash)
    with fh:
        head = ["epoch_years"]
        for s in SpeciesClass:
            head += [f"{s.name}_mean", f"{s.name}_std"]
        w.writerow(head + ["total_mean", "total_std"])
        for k, t in enumerate(stats.epochs):
            row = [_fmt(t)]
            for s in SpeciesClass:
                row += [_fmt(stats.mean[k, s]), _fmt(stats.std[k, s])]
            w.writerow(row + [_fmt(stats.total_mean[k]), _fmt(stats.total_std[k])])
    return out_dir / "timeseries.csv"


def export_collisions(stats, out_dir: Path, chash: str) -> Path:
    fh, w = _open_out(out_dir, "collisions.csv", chash)
    with fh:
        w.writerow(["epoch_years", "catastrophic_mean", "catastrophic_std", "total_mean", "total_std"])
        for k, t in enumerate(stats.epochs):
            w.writerow([_fmt(t), _fmt(stats.catastrophic_mean[k]), _fmt(stats.catastrophic_std[k]),
                        _fmt(stats.collisions_mean[k]), _fmt(stats.collisions_std[k])])
    return out_dir / "collisions.csv"


def export_traces(stats, out_dir: Path, chash: str) -> Path:
    """Per-run per-step cause aggregates, the input for coefficient extraction."""
    from .engine import TRACE_KEYS

    fh, w = _open_out(out_dir, "steps.csv", chash)
    with fh:
        w.writerow(["run", "step", "epoch_years", "dt_years"] + list(TRACE_KEYS))
        for r, run in enumerate(stats.runs):
            dt_years = float(run.epochs[1] - run.epochs[0]) if len(run.epochs) > 1 else 0.0
            for k in range(len(run.epochs) - 1):
                w.writerow([r, k, _fmt(run.epochs[k]), _fmt(dt_years)]
                           + [_fmt(run.trace[key][k]) for key in TRACE_KEYS])
    return out_dir / "steps.csv"


def export_edges(links, grid, out_dir: Path, chash: str, name: str = "edges.csv") -> Path:
    fh, w = _open_out(out_dir, name, chash)
    with fh:
        w.writerow(["src_species", "src_site", "dst_species", "dst_site", "kind", "chi_per_day", "p"])
        for e in links.edges:
            w.writerow([e.src_species, e.src_site, e.dst_species, e.dst_site, e.kind, _fmt(e.chi), _fmt(e.p)])
    return out_dir / name


def export_degrees(links, grid, out_dir: Path, chash: str, name: str = "degrees.csv") -> Path:
    from .netanalysis import weighted_degrees

    d_in, d_out = weighted_degrees(links)
    fh, w = _open_out(out_dir, name, chash)
    with fh:
        w.writerow(["node", "species", "site", "alt_lo_km", "alt_hi_km", "inc_lo_deg", "inc_hi_deg",
                    "shell_index", "inc_index", "d_in", "d_out"])
        for k in range(grid.n_nodes):
            site_id, sp = divmod(k, len(SpeciesClass))
            s = grid.site(site_id)
            w.writerow([k, SpeciesClass(sp).name, site_id, s.alt_lo, s.alt_hi, s.inc_lo, s.inc_hi,
                        site_id // grid.n_inc, site_id % grid.n_inc, _fmt(d_in[k]), _fmt(d_out[k])])
    return out_dir / name


def export_capacity(model, out_dir: Path, chash: str) -> list[Path]:
    from .capacity import CapacityModel1D

    paths = []
    fh, w = _open_out(out_dir, "capacity.csv", chash)
    with fh:
        w.writerow(["coefficient", "value"])
        for k, v in model.coefficients().items():
            w.writerow([k, _fmt(v)])
    paths.append(out_dir / "capacity.csv")
    if not isinstance(model, CapacityModel1D):
        fh, w = _open_out(out_dir, "equilibria.csv", chash)
        with fh:
            w.writerow(["x", "y", "stability", "eig1_real", "eig2_real"])
            for eq in model.equilibria:
                w.writerow([_fmt(eq.x), _fmt(eq.y), eq.stability, _fmt(eq.eigenvalues[0].real),
                            _fmt(eq.eigenvalues[1].real)])
        paths.append(out_dir / "equilibria.csv")
    return paths


def export_phase_portrait(grid_data, out_dir: Path, chash: str) -> Path:
    X, Y, DX, DY = grid_data
    fh, w = _open_out(out_dir, "phase_portrait.csv", chash)
    with fh:
        w.writerow(["x", "y", "dx", "dy", "speed"])
        for x, y, dx, dy in zip(X.ravel(), Y.ravel(), DX.ravel(), DY.ravel()):
            w.writerow([_fmt(x), _fmt(y), _fmt(dx), _fmt(dy), _fmt(np.hypot(dx, dy))])
    return out_dir / "phase_portrait.csv"


def export_results(stats=None, links=None, capacity=None, out_dir=".", config_hash_value: str = "",
                   grid=None, phase_grid=None) -> list[Path]:
    """Write every available result table to ``out_dir`` with a provenance header."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if not os.access(out_dir, os.W_OK):
        raise PermissionError(f"cannot write to {out_dir}")
    written = []
    if stats is not None:
        written += [export_timeseries(stats, out_dir, config_hash_value),
                    export_collisions(stats, out_dir, config_hash_value)]
        if stats.runs:
            written.append(export_traces(stats, out_dir, config_hash_value))
    if links is not None:
        grid = grid or links.grid
        written += [export_edges(links, grid, out_dir, config_hash_value),
                    export_degrees(links, grid, out_dir, config_hash_value)]
    if capacity is not None:
        written += export_capacity(capacity, out_dir, config_hash_value)
    if phase_grid is not None:
        written.append(export_phase_portrait(phase_grid, out_dir, config_hash_value))
    return written


# ---------------------------------------------------------------- readers

def read_table(path) -> tuple[dict, dict]:
    """Read any exported CSV: returns (header metadata, columns as lists of strings)."""
    meta = {}
    with open(path, newline="") as fh:
        lines = list(fh)
    body = []
    for line in lines:
        if line.startswith("#"):
            for part in line[1:].strip().split(","):
                if "=" in part:
                    k, v = part.split("=", 1)
                    meta[k.strip()] = v.strip()
        else:
            body.append(line)
    reader = csv.reader(body)
    header = next(reader)
    cols = {h: [] for h in header}
    for row in reader:
        for h, v in zip(header, row):
            cols[h].append(v)
    return meta, cols


def read_numeric_table(path) -> tuple[dict, dict]:
    meta, cols = read_table(path)
    out = {}
    for k, v in cols.items():
        try:
            out[k] = np.array([float(x) for x in v])
        except ValueError:
            out[k] = np.array(v, dtype=object)
    return meta, out


def read_traces(path) -> list[dict]:
    """Per-run trace dicts from a ``steps.csv`` export."""
    from .engine import TRACE_KEYS

    _, cols = read_numeric_table(path)
    runs = []
    run_ids = cols["run"].astype(int)
    for r in np.unique(run_ids):
        m = run_ids == r
        tr = {k: cols[k][m] for k in TRACE_KEYS}
        tr["dt_years"] = float(cols["dt_years"][m][0])
        runs.append(tr)
    return runs
