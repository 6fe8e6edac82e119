import json

import pytest

from trunclong.cli import main
from trunclong.datasets import hypothetical_paths
from trunclong.simulator import SimConfig


@pytest.fixture()
def table_files():
    return hypothetical_paths()


def run(*argv):
    return main(list(argv))


def test_validate_clean_cohort(table_files, capsys):
    code = run("validate", "--subjects", table_files[0], "--obs", table_files[1])
    assert code == 0
    assert "0 violations" in capsys.readouterr().out


def test_validate_broken_cohort(tmp_path, table_files, capsys):
    obs = tmp_path / "obs.csv"
    with open(table_files[1]) as fh:
        obs.write_text(fh.read() + "C,4,70\n")
    code = run("validate", "--subjects", table_files[0], "--obs", str(obs))
    assert code == 1
    out = capsys.readouterr().out
    assert "1 violations" in out
    assert "observation-after-death" in out


def test_fit_rca_writes_expected_slope(tmp_path, table_files):
    out = tmp_path / "rca.json"
    code = run("fit", "--model", "rca", "--subjects", table_files[0], "--obs", table_files[1],
               "--horizons", "5", "--out", str(out))
    assert code == 0
    report = json.loads(out.read_text())
    estimates = {e["name"]: e["value"] for e in report["estimates"]}
    assert estimates["coef:time"] == pytest.approx(11.0 / 12.0, abs=1e-9)
    assert estimates["mean_at_5"] == pytest.approx(80.75, abs=1e-9)


def test_fit_writes_trajectories_csv(tmp_path, table_files):
    out = tmp_path / "r.json"
    traj = tmp_path / "t.csv"
    code = run("fit", "--model", "rca", "--subjects", table_files[0], "--obs", table_files[1],
               "--out", str(out), "--trajectories", str(traj))
    assert code == 0
    lines = traj.read_text().strip().splitlines()
    assert lines[0] == "group,stratum,time,value"
    assert len(lines) > 1


def test_simulate_is_byte_deterministic(tmp_path):
    config = tmp_path / "config.json"
    config.write_text(SimConfig(n_subjects=40, seed=7, horizon=4, nonresponse_prob=0.1,
                                hazard_intercept=2.0, hazard_response_coef=-0.05,
                                emit_counterfactuals=True).to_json())
    assert run("simulate", "--config", str(config), "--out-prefix", str(tmp_path / "a")) == 0
    assert run("simulate", "--config", str(config), "--out-prefix", str(tmp_path / "b")) == 0
    for suffix in ("subjects.csv", "observations.csv", "counterfactuals.csv"):
        assert (tmp_path / f"a_{suffix}").read_bytes() == (tmp_path / f"b_{suffix}").read_bytes()


def test_cohort_round_trip_through_cli_files(tmp_path, table_files):
    from trunclong.cohort import read_cohort_csv, write_cohort_csv

    cohort = read_cohort_csv(*table_files)
    s, o = tmp_path / "s.csv", tmp_path / "o.csv"
    write_cohort_csv(cohort, str(s), str(o))
    assert run("validate", "--subjects", str(s), "--obs", str(o)) == 0


def test_impute_pipeline(tmp_path):
    config = tmp_path / "config.json"
    config.write_text(SimConfig(n_subjects=100, seed=5, horizon=5, nonresponse_prob=0.2,
                                hazard_intercept=2.0, hazard_response_coef=-0.05,
                                intercept_mean=(85, 85), intercept_sd=(5, 5),
                                response_bounds=(0.0, 100.0)).to_json())
    assert run("simulate", "--config", str(config), "--out-prefix", str(tmp_path / "sim")) == 0
    code = run("impute", "--subjects", str(tmp_path / "sim_subjects.csv"),
               "--obs", str(tmp_path / "sim_observations.csv"),
               "--boundaries", "2,4", "--seed", "3", "--out-prefix", str(tmp_path / "imp"),
               "--report", str(tmp_path / "imp.json"), "--bounds", "0,100")
    assert code == 0
    payload = json.loads((tmp_path / "imp.json").read_text())
    assert payload["total_imputed"] > 0
    assert run("validate", "--subjects", str(tmp_path / "imp_subjects.csv"),
               "--obs", str(tmp_path / "imp_observations.csv")) == 0


def test_pah_subcommand(tmp_path, table_files):
    out = tmp_path / "pah.json"
    code = run("pah", "--subjects", table_files[0], "--obs", table_files[1],
               "--threshold", "80", "--times", "0,1,2,3,4,5", "--out", str(out))
    assert code == 0
    report = json.loads(out.read_text())
    estimates = {e["name"]: e["value"] for e in report["estimates"]}
    assert estimates["pah_at_0"] == 0.75
    assert estimates["pah_at_5"] == 0.25


def test_report_combines_and_passes_through(tmp_path, table_files):
    paths = {}
    specs = [
        ("naive_extrapolation", ["--horizon", "5"]),
        ("rca", ["--horizons", "5"]),
        ("joint_pah", ["--threshold", "80", "--times", "0,1,2,3,4,5"]),
        ("pattern_mixture", ["--boundaries", "0,6", "--horizon", "5", "--random-effects", "none"]),
        ("terminal_decline", ["--random-effects", "none"]),
        ("unconditional", ["--horizons", "5"]),
    ]
    for kind, extra in specs:
        out = tmp_path / f"{kind}.json"
        code = run("fit", "--model", kind, "--subjects", table_files[0], "--obs", table_files[1],
                   "--out", str(out), *extra)
        assert code == 0, kind
        paths[kind] = out

    prefix = tmp_path / "combined"
    code = run("report", "--inputs", *[str(p) for p in paths.values()], "--out", str(prefix))
    assert code == 0
    combined = json.loads((prefix.with_suffix(".json")).read_text())
    rows = {(r["model_kind"], r["stratum"], r["name"]): r["value"] for r in combined["estimates"]}
    assert rows[("naive_extrapolation", "", "mean_at_5")] == pytest.approx(54.5, abs=1e-9)
    assert rows[("naive_extrapolation", "", "mean_slope")] == pytest.approx(-5.25, abs=1e-9)
    assert rows[("pattern_mixture", "survivor", "mean_at_5")] == pytest.approx(82.0, abs=1e-9)
    assert rows[("pattern_mixture", "survivor", "mean_slope")] == pytest.approx(-1.0, abs=1e-9)
    assert rows[("pattern_mixture", "death[0,6)", "mean_slope")] == pytest.approx(-9.5, abs=1e-9)
    assert rows[("terminal_decline", "", "slope")] == pytest.approx(-9.5, abs=1e-9)
    assert rows[("rca", "", "coef:time")] == pytest.approx(11.0 / 12.0, abs=1e-9)
    assert rows[("rca", "", "mean_at_5")] == pytest.approx(80.75, abs=1e-9)
    assert rows[("joint_pah", "", "pah_at_0")] == 0.75
    assert rows[("joint_pah", "", "pah_at_5")] == 0.25
    # single-report pass-through
    single = tmp_path / "single"
    assert run("report", "--inputs", str(paths["rca"]), "--out", str(single)) == 0
    solo = json.loads(single.with_suffix(".json").read_text())
    assert {r["model_kind"] for r in solo["estimates"]} == {"rca"}
    # CSV companion exists with a header
    assert (prefix.parent / "combined.csv").read_text().startswith("model_kind,stratum,name,value")


def test_report_warns_on_mixed_cohorts(tmp_path, table_files, capsys):
    out1 = tmp_path / "a.json"
    run("fit", "--model", "rca", "--subjects", table_files[0], "--obs", table_files[1],
        "--out", str(out1))
    config = tmp_path / "config.json"
    config.write_text(SimConfig(n_subjects=30, seed=2, horizon=4, hazard_intercept=2.0,
                                hazard_response_coef=-0.05).to_json())
    run("simulate", "--config", str(config), "--out-prefix", str(tmp_path / "sim"))
    out2 = tmp_path / "b.json"
    run("fit", "--model", "rca", "--subjects", str(tmp_path / "sim_subjects.csv"),
        "--obs", str(tmp_path / "sim_observations.csv"), "--out", str(out2))
    capsys.readouterr()
    code = run("report", "--inputs", str(out1), str(out2), "--out", str(tmp_path / "mix"))
    assert code == 0
    assert "different cohorts" in capsys.readouterr().err
    combined = json.loads((tmp_path / "mix.json").read_text())
    assert len({r["model_kind"] for r in combined["estimates"]}) == 1
    assert len(combined["estimates"]) > 2


def test_missing_file_is_data_error(capsys):
    assert run("validate", "--subjects", "no-such.csv", "--obs", "also-missing.csv") == 1
    assert "error:" in capsys.readouterr().err


def test_malformed_row_reports_line_number(tmp_path, table_files, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("subject_id,time,value\nA,zero,90\n")
    assert run("validate", "--subjects", table_files[0], "--obs", str(bad)) == 1
    assert "bad.csv:2" in capsys.readouterr().err


def test_separation_is_numerical_error(tmp_path, capsys):
    # two groups whose survival is perfectly separated by baseline age
    subjects = ["subject_id,baseline_age,group,survival_time,death_observed"]
    observations = ["subject_id,time,value"]
    for i in range(12):
        group = i % 2
        age = 60.0 + i
        dies = age < 66.0
        survival = "2.5" if dies else ""
        subjects.append(f"s{i},{age},{group},{survival},{1 if dies else 0}")
        horizon = 2 if dies else 4
        for t in range(horizon + 1):
            observations.append(f"s{i},{t},80")
    s, o = tmp_path / "s.csv", tmp_path / "o.csv"
    s.write_text("\n".join(subjects) + "\n")
    o.write_text("\n".join(observations) + "\n")
    code = run("fit", "--model", "principal_strat", "--subjects", str(s), "--obs", str(o),
               "--horizon", "4", "--response-time", "4", "--out", str(tmp_path / "ps.json"))
    assert code == 2
    assert "numerical failure" in capsys.readouterr().err


def test_fit_all_on_bundled_cohort(tmp_path, table_files, capsys):
    out = tmp_path / "all.json"
    code = run("fit", "--model", "all", "--subjects", table_files[0], "--obs", table_files[1],
               "--horizon", "5", "--horizons", "5", "--boundaries", "0,6",
               "--threshold", "80", "--times", "0,1,2,3,4,5",
               "--random-effects", "none", "--out", str(out))
    assert code == 0
    reports = json.loads(out.read_text())
    kinds = {r["model_kind"] for r in reports}
    assert {"naive_extrapolation", "unconditional", "pattern_mixture",
            "terminal_decline", "rca", "joint_pah"} <= kinds
    # principal stratification is skipped: only one group in the data
    assert "skipped principal_strat" in capsys.readouterr().err
