import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from debrisnet import io as dio
from debrisnet.catalog import synthetic_catalog
from debrisnet.cli import main
from debrisnet.domain import SimConfig, SpeciesClass
from debrisnet.engine import run_monte_carlo

HEADER = "object_id,class,a_km,e,i_deg,mass_kg,radius_m,area_m2,cd,age_years\n"


def test_sample_catalog_counts():
    pop = dio.load_sample_catalog()
    counts = np.bincount(pop.species.astype(int), minlength=4)
    assert counts[SpeciesClass.P] == 5471
    assert counts[SpeciesClass.U] == 1111
    assert counts[SpeciesClass.N] == 2440
    assert counts[SpeciesClass.F] == 9804
    assert len(pop) == 18826


def test_empty_catalog(tmp_path):
    p = tmp_path / "empty.csv"
    p.write_text(HEADER)
    pop, errors = dio.read_catalog(p)
    assert len(pop) == 0 and errors == []


def test_bad_rows_rejected_with_line_numbers(tmp_path):
    p = tmp_path / "cat.csv"
    p.write_text(HEADER + "1,P,7000,0.001,53,260,1.5,4,2.2,1\n"
                          "2,F,7100,1.2,80,0.1,0.1,0.03,2.2,0\n"
                          "3,X,7100,0.0,80,0.1,0.1,0.03,2.2,0\n")
    pop, errors = dio.read_catalog(p)
    assert len(pop) == 1 and [e.line for e in errors] == [3, 4]
    assert "e" in errors[0].message


def test_malformed_header(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("id,foo\n1,2\n")
    with pytest.raises(dio.CatalogFormatError):
        dio.read_catalog(p)


@settings(max_examples=10)
@given(st.integers(0, 10_000))
def test_population_round_trip(tmp_path_factory, seed):
    pop = synthetic_catalog(seed=seed, totals={"P": 20, "U": 5, "N": 5, "F": 40})
    path = tmp_path_factory.mktemp("rt") / "pop.csv"
    dio.write_population(pop, path, dio.provenance_line("abc"))
    back, errors = dio.read_catalog(path)
    assert errors == [] and len(back) == len(pop)
    for col in ("object_id", "species", "a", "e", "inc", "mass", "radius", "area", "cd", "age"):
        assert np.array_equal(getattr(back, col), getattr(pop, col)), col


def test_config_overrides_and_validation(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("simulation: {dt_days: 10}\npolicy: {s_cam: 0.5, gamma_pmd: 0.1}\ngrid: {shell_km: 100}\n")
    cfg, raw = dio.load_config(p, {"kappa": 2.0, "gamma": None})
    assert (cfg.dt_days, cfg.s_cam, cfg.gamma, cfg.kappa, cfg.shell_km) == (10.0, 0.5, 0.1, 2.0, 100.0)
    p.write_text("policy: {s_cam: 1.5}\n")
    with pytest.raises(ValueError):
        dio.load_config(p)
    p.write_text("bogus: {}\n")
    with pytest.raises(ValueError):
        dio.load_config(p)
    assert dio.config_hash(cfg) == dio.config_hash(SimConfig(**vars(cfg)))


@pytest.fixture(scope="module")
def small_stats():
    cfg = SimConfig(dt_days=365.25, horizon_years=4.0, shell_km=200.0, inc_deg=60.0, rng_seed=5)
    pop = synthetic_catalog(seed=5, totals={"P": 100, "U": 30, "N": 30, "F": 200})
    return cfg, run_monte_carlo(cfg, pop, 1)


def test_export_single_run(tmp_path, small_stats):
    cfg, stats = small_stats
    paths = dio.export_results(stats, out_dir=tmp_path, config_hash_value="h1")
    meta, ts = dio.read_numeric_table(tmp_path / "timeseries.csv")
    assert meta["config_hash"] == "h1"
    assert len(ts["epoch_years"]) == cfg.horizon_years * 365.25 / cfg.dt_days + 1
    for s in SpeciesClass:
        assert np.all(ts[f"{s.name}_std"] == 0)
    for p in paths:
        assert dio.read_table(p)[0]["config_hash"] == "h1"
    traces = dio.read_traces(tmp_path / "steps.csv")
    assert len(traces) == 1 and np.array_equal(traces[0]["x"], stats.runs[0].trace["x"])


def test_export_byte_identical(tmp_path, small_stats):
    _, stats = small_stats
    a = dio.export_results(stats, out_dir=tmp_path / "a", config_hash_value="h")
    b = dio.export_results(stats, out_dir=tmp_path / "b", config_hash_value="h")
    assert [p.read_bytes() for p in a] == [p.read_bytes() for p in b]


def test_export_unwritable(tmp_path, small_stats):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError):
        dio.export_results(small_stats[1], out_dir=blocker / "sub")


def _write_small_config(tmp_path):
    p = tmp_path / "cfg.yaml"
    p.write_text("simulation: {dt_days: 365.25, horizon_years: 3, rng_seed: 2}\n"
                 "grid: {shell_km: 200, inc_deg: 60}\n")
    return p


def _small_catalog(tmp_path):
    p = tmp_path / "cat.csv"
    dio.write_population(synthetic_catalog(seed=1, totals={"P": 80, "U": 20, "N": 20, "F": 150}), p)
    return p


def test_cli_simulate_and_capacity(tmp_path, capsys):
    cfg, cat = _write_small_config(tmp_path), _small_catalog(tmp_path)
    out = tmp_path / "sim"
    assert main(["simulate", "--config", str(cfg), "--catalog", str(cat), "--runs", "2", "--out", str(out),
                 "--launch", "LM-2", "--save-final"]) == 0
    for name in ("timeseries.csv", "collisions.csv", "steps.csv", "final_population.csv", "timeseries.png",
                 "collisions.png"):
        assert (out / name).stat().st_size > 0
    assert (out / "timeseries.png").read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
    cap = tmp_path / "cap"
    assert main(["capacity", str(out), "--mode", "2d", "--grid", "9", "--out", str(cap)]) == 0
    text = capsys.readouterr().out
    assert "lambda" in text and (cap / "capacity.csv").exists() and (cap / "phase_portrait.csv").exists()
    assert main(["capacity", str(out / "steps.csv"), "--mode", "1d", "--out", str(cap), "--no-plots"]) == 0


def test_cli_network(tmp_path, capsys):
    cfg, cat = _write_small_config(tmp_path), _small_catalog(tmp_path)
    out = tmp_path / "net"
    assert main(["network", "--config", str(cfg), "--catalog", str(cat), "--rho", "0", "--out", str(out)]) == 0
    assert "top in-degree" in capsys.readouterr().out
    meta, deg = dio.read_numeric_table(out / "degrees.csv")
    assert deg["d_in"].sum() == pytest.approx(deg["d_out"].sum(), rel=1e-12)
    assert (out / "degrees.png").exists()


def test_cli_flow_tensor_and_fit_launch(tmp_path):
    cfg = _write_small_config(tmp_path)
    tpath = tmp_path / "t.npz"
    assert main(["flow-tensor", "--config", str(cfg), "--n-rep", "1", "--shells", "0", "--out", str(tpath)]) == 0
    assert tpath.exists()
    rng = np.random.default_rng(0)
    rec = tmp_path / "rec.csv"
    rows = ["class,a_km,i_deg,mass_kg,area_m2,length_m"]
    for k in range(60):
        rows.append(f"{'P' if k % 3 else 'U'},{rng.normal(6950, 20)},{rng.normal(53, 1)},{rng.uniform(100, 900)},"
                    f"{rng.uniform(1, 9)},{rng.uniform(1, 4)}")
    rec.write_text("\n".join(rows) + "\n")
    out = tmp_path / "lm.yaml"
    assert main(["fit-launch", str(rec), "--k-orbital", "2", "--seed", "1", "--out", str(out)]) == 0
    from debrisnet.launch import LaunchModel
    import yaml

    model = LaunchModel.from_mapping(yaml.safe_load(out.read_text()))
    assert model.class_proportions["U"] == pytest.approx(20 / 60)


def test_cli_validate_quick(capsys):
    code = main(["validate", "--quick"])
    lines = capsys.readouterr().out.strip().splitlines()
    assert code == 0 and lines and all(line.startswith("PASS") for line in lines)


def test_cli_requires_subcommand():
    with pytest.raises(SystemExit):
        main([])
