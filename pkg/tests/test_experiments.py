import csv
import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pathwise_monotone.experiments import (
    ConfigError,
    RunManifest,
    ScenarioConfig,
    convergence_table,
    dump_config,
    parse_config,
    recompute_flags,
    run_scenario,
    validate,
)
from pathwise_monotone.experiments.cli import main

SMALL = "n: 256\nd: 16\nseeds: [1]\n"


# --- config parsing ----------------------------------------------------------------------


def test_minimal_s1_config_fills_defaults():
    cfg = parse_config("scenario: S1\n")
    assert cfg.n == 2**12 and cfg.d == 128 and cfg.seeds == [1, 2, 3, 4, 5]
    assert (cfg.operator, cfg.p, cfg.driver, cfg.H) == ("p_laplace", 3.0, "additive_fbm", 0.75)


def test_hurst_out_of_range_rejected():
    with pytest.raises(ConfigError) as exc:
        parse_config("scenario: S1\nH: 1.2\n")
    assert any("Hurst in (0,1)" in e for e in exc.value.errors)


def test_zero_mollification_rejected():
    with pytest.raises(ConfigError) as exc:
        parse_config("scenario: S5\neps: [0.1, 0.0]\n")
    assert any("mollification must be positive" in e for e in exc.value.errors)


def test_rough_additive_noise_rejected_with_hypothesis_cited():
    with pytest.raises(ConfigError) as exc:
        parse_config("scenario: S1\nH: 0.4\n")
    assert any("gamma > 1/2" in e or "gamma <= 1/2" in e for e in exc.value.errors)


def test_errors_are_itemized_together():
    with pytest.raises(ConfigError) as exc:
        parse_config("scenario: S1\nH: 1.2\nbogus: 3\nn: 100\n")
    errs = exc.value.errors
    assert any("bogus: unknown key" in e for e in errs)
    assert any("Hurst" in e for e in errs)
    assert any(e.startswith("n:") for e in errs)


@pytest.mark.parametrize(
    "text",
    ["- a\n- b\n", "H: 0.7\n", "scenario: S9\n", "scenario: S1\np: abc\n", "scenario: [unclosed\n"],
)
def test_malformed_configs(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_config_round_trip_and_hash():
    cfg = parse_config("scenario: S2\nn: 512\n")
    again = parse_config(dump_config(cfg))
    assert again == cfg and again.config_hash() == cfg.config_hash()
    other = parse_config("scenario: S2\nn: 1024\n")
    assert other.config_hash() != cfg.config_hash()


@settings(max_examples=40, deadline=None)
@given(st.floats(0.01, 0.99))
def test_additive_exponents_admissible_iff_regular_enough(H):
    cfg = ScenarioConfig("S1", H=H)
    gamma, q = cfg.driver_exponents()
    assert gamma < H
    assert (validate(cfg) == []) == (gamma > 0.5)


# --- scenario runs ----------------------------------------------------------------------


def _run(tmp_path, text, name="a"):
    return run_scenario(parse_config(text), tmp_path / name)


def test_s1_run_is_deterministic_and_flags_rebuild(tmp_path):
    text = "scenario: S1\n" + SMALL
    m1 = _run(tmp_path, text, "a")
    m2 = _run(tmp_path, text, "b")
    assert m1.deterministic_view() == m2.deterministic_view()
    for f in m1.runs[0]["files"]:
        if f.endswith(".csv"):
            a = (tmp_path / "a" / "S1" / f).read_bytes()
            assert a == (tmp_path / "b" / "S1" / f).read_bytes(), f
    run_dir = tmp_path / "a" / "S1" / "seed_1"
    assert recompute_flags(run_dir, "S1") == m1.runs[0]["flags"]
    loaded = RunManifest.from_json(tmp_path / "a" / "S1" / "manifest.json")
    assert loaded.deterministic_view() == m1.deterministic_view()
    assert m1.passed


def test_s1_contraction_ratio(tmp_path):
    m = _run(tmp_path, "scenario: S1\nn: 1024\nd: 32\nseeds: [1, 2]\n")
    for r in m.runs:
        assert r["flags"]["contraction_ratio"] and r["flags"]["contraction_nonincreasing"]
        with open(tmp_path / "a" / "S1" / f"seed_{r['seed']}" / "trace.csv") as fh:
            ratios = [float(row["ratio"]) for row in csv.DictReader(fh)]
        assert max(ratios) <= 1.01


def test_s6_battery_passes(tmp_path):
    m = _run(tmp_path, "scenario: S6\nseeds: [1, 2]\n")
    assert m.passed
    with open(tmp_path / "a" / "S6" / "battery" / "battery.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert rows and all(float(r["value"]) <= float(r["threshold"]) for r in rows)
    assert recompute_flags(tmp_path / "a" / "S6" / "battery", "S6") == m.runs[0]["flags"]


def test_run_scenario_rejects_before_compute(tmp_path):
    with pytest.raises(ConfigError):
        run_scenario(ScenarioConfig("S1", H=0.4), tmp_path)
    assert not (tmp_path / "S1").exists()


# --- convergence tables ---------------------------------------------------------------------


def _table(study, levels):
    cfg = parse_config(f"scenario: S6\nstudy: {study}\nlevels: {levels}\n")
    return convergence_table(cfg)


def test_heat_table_rate_near_one(tmp_path):
    rows = _table("heat", [6, 7, 8])
    assert [r["level"] for r in rows] == [6, 7, 8]
    assert rows[0]["rate"] == ""
    assert all(0.9 <= r["rate"] <= 1.1 for r in rows[1:])


def test_sewing_table_rate():
    rows = _table("sewing_left_point", [6, 8, 10])
    assert all(r["rate"] >= 0.9 for r in rows[1:])


def test_chain_rule_table_exact():
    rows = _table("chain_rule_identity", [6, 7, 8])
    assert all(r["rate"] == "exact" and r["error"] <= 1e-12 for r in rows)


def test_table_csv_columns(tmp_path):
    cfg = parse_config("scenario: S6\nstudy: sewing_left_point\nlevels: [4, 5, 6]\n")
    convergence_table(cfg, path=tmp_path / "t.csv")
    assert (tmp_path / "t.csv").read_text().splitlines()[0] == "level,n,error,rate"


# --- command line ---------------------------------------------------------------------------


def test_cli_sew(tmp_path, capsys):
    assert main(["sew", "--n", "256", "--out", str(tmp_path)]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["passed"] and (tmp_path / "sewn.csv").exists()


def test_cli_young_and_localtime(tmp_path, capsys):
    assert main(["young", "--n", "4096", "--seed", "3", "--out", str(tmp_path)]) == 0
    assert main(["localtime", "--n", "4096", "--m", "256", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "young_pairing.csv").exists() and (tmp_path / "local_time.csv").exists()


def test_cli_solve(tmp_path, capsys):
    code = main(["solve", "--n", "128", "--d", "16", "--out", str(tmp_path)])
    assert code == 0 and (tmp_path / "trace.csv").exists()


def test_cli_run_and_table(tmp_path, capsys):
    cfg = tmp_path / "s1.yaml"
    cfg.write_text("scenario: S1\n" + SMALL)
    assert main(["run", str(cfg), "--out", str(tmp_path / "runs")]) == 0
    assert (tmp_path / "runs" / "S1" / "manifest.json").exists()
    tab = tmp_path / "t.yaml"
    tab.write_text("scenario: S6\nstudy: heat\nlevels: [6, 7, 8]\n")
    assert main(["table", str(tab), "--out", str(tmp_path / "tables")]) == 0
    assert (tmp_path / "tables" / "table_heat.csv").exists()


def test_cli_config_errors_exit_two(tmp_path, capsys):
    cfg = tmp_path / "bad.yaml"
    cfg.write_text("scenario: S1\nH: 1.2\nextra: 1\n")
    assert main(["run", str(cfg), "--out", str(tmp_path)]) == 2
    err = capsys.readouterr().err
    assert "Hurst in (0,1)" in err and "extra: unknown key" in err
    cfg.write_text("scenario: S1\nH: 0.4\n")
    assert main(["run", str(cfg), "--out", str(tmp_path)]) == 2
    assert main(["solve", "--H", "0.4", "--out", str(tmp_path)]) == 2


def test_cli_audit_failure_exit_one(tmp_path, capsys):
    # a power germ with exponent 1.5 cannot be sewn in one dyadic level: the audit fails
    assert main(["sew", "--germ", "power", "--exponent", "1.5", "--n", "64", "--max-level", "3",
                 "--out", str(tmp_path)]) == 1


def test_cli_requires_subcommand():
    with pytest.raises(SystemExit):
        main([])
