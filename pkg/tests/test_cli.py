import json

import pytest

from gridforge.case_loader import load_case, load_fleet_csv
from gridforge.cli import build_parser, main
from gridforge.consts import EXIT_INFEASIBLE, EXIT_INPUT_ERROR, EXIT_OK, EXIT_VIOLATIONS
from gridforge.run_store import RunStore


def _agg_csv(path, region="office", p_kw=10.0, periods=4):
    lines = ["region,t,p_kw"] + [f"{region},{t},{p_kw}" for t in range(1, periods + 1)]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


@pytest.fixture
def results(tmp_path):
    return tmp_path / "results"


def test_parser_requires_command():
    with pytest.raises(SystemExit):
        build_parser().parse_args([])


def test_missing_case_is_input_error(results, capsys):
    code = main(["--results-dir", str(results), "validate", "--case", "no-such-case.json"])
    assert code == EXIT_INPUT_ERROR
    assert "case file not found" in capsys.readouterr().err


def test_validate_bundled(capsys):
    assert main(["validate", "--case", "demo6", "star4"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "demo6" in out and "star4" in out


def test_missing_config_file(tmp_path):
    assert main(["--config", str(tmp_path / "none.toml"), "validate", "--case", "star4"]) == EXIT_INPUT_ERROR


def test_gen_ieee33_then_validate(tmp_path):
    out = tmp_path / "ieee33.json"
    assert main(["gen", "ieee33", "--no-dgrs", "--out", str(out)]) == EXIT_OK
    case = load_case(out)
    assert len(case.lines) == 37
    assert not case.has_dgr_candidates
    assert main(["validate", "--case", str(out)]) == EXIT_OK


def test_gen_fleet(tmp_path):
    out = tmp_path / "fleet.csv"
    code = main(["gen", "fleet", "--case", "star4", "--penetration", "0.05", "--out", str(out)])
    assert code == EXIT_OK
    fleet = load_fleet_csv(out)
    assert len(fleet) >= 1
    assert fleet.regions == ["office"]


def test_gen_fleet_needs_case():
    assert main(["gen", "fleet"]) == EXIT_INPUT_ERROR


def test_plan_verify_report(tmp_path, results, capsys):
    agg = _agg_csv(tmp_path / "agg.csv")
    plan_dir = tmp_path / "plan"
    code = main(
        ["--results-dir", str(results), "plan", "--case", "star4", "--agg", str(agg), "--no-dgrs", "--out", str(plan_dir)]
    )
    assert code == EXIT_OK
    assert (plan_dir / "plan.json").exists()
    assert "Case A" in capsys.readouterr().out

    runs = RunStore(results).list_runs("plan")
    assert len(runs) == 1
    assert runs[0]["summary"]["label"] == "A"

    report = tmp_path / "verify.json"
    code = main(["verify", "--case", "star4", "--plan", str(plan_dir), "--agg", str(agg), "--out", str(report)])
    assert code == EXIT_OK
    assert json.loads(report.read_text(encoding="utf-8"))["verification"]["status"] == "pass"

    wrong = _agg_csv(tmp_path / "wrong.csv", p_kw=20.0)
    assert main(["verify", "--case", "star4", "--plan", str(plan_dir), "--agg", str(wrong)]) == EXIT_VIOLATIONS

    report_dir = tmp_path / "report"
    assert main(["report", str(results), "--out", str(report_dir)]) == EXIT_OK
    assert (report_dir / "report.md").exists()
    assert (report_dir / "cost_table.csv").exists()


def test_plan_infeasible_exit_code(tmp_path, results, capsys):
    agg = _agg_csv(tmp_path / "agg.csv", region="residential", p_kw=5.0)
    code = main(["--results-dir", str(results), "plan", "--case", "star4", "--agg", str(agg), "--no-dgrs"])
    assert code == EXIT_INFEASIBLE
    assert "infeasible" in capsys.readouterr().err


def test_report_on_empty_dir(tmp_path):
    assert main(["report", str(tmp_path)]) == EXIT_INPUT_ERROR


def test_schedule_writes_files(tmp_path, results):
    sched_dir = tmp_path / "sched"
    assert main(["--results-dir", str(results), "schedule", "--case", "demo6", "--out", str(sched_dir)]) == EXIT_OK
    for name in ("sched.json", "schedule.csv", "agg.csv", "summary.json"):
        assert (sched_dir / name).exists()
    assert RunStore(results).stats()["kinds"]["schedule"] == 1


def test_plan_dump_model_to_path(tmp_path, results):
    agg = _agg_csv(tmp_path / "agg.csv")
    lp = tmp_path / "models" / "sp2.lp"
    code = main(
        [
            "--results-dir", str(results), "plan", "--case", "star4", "--agg", str(agg), "--no-dgrs",
            "--out", str(tmp_path / "plan"), "--dump-model", str(lp),
        ]
    )
    assert code == EXIT_OK
    assert "Minimize" in lp.read_text(encoding="utf-8")
    assert not (tmp_path / "plan" / "model.lp").exists()


def test_rerun_replaces_previous_run(results):
    args = ["--results-dir", str(results), "schedule", "--case", "demo6"]
    assert main(args) == EXIT_OK
    store = RunStore(results)
    [first] = store.list_runs("schedule")
    run_dir = store.path_of(first["key"])
    (run_dir / "stale.txt").write_text("old", encoding="utf-8")

    assert main(args) == EXIT_OK
    store = RunStore(results)
    [second] = store.list_runs("schedule")
    assert second["key"] == first["key"]
    assert not (run_dir / "stale.txt").exists()
    assert (run_dir / "sched.json").exists()


@pytest.mark.slow
def test_sweep_single_point(tmp_path, results):
    out = tmp_path / "sweep"
    code = main(["--results-dir", str(results), "sweep", "--case", "star4", "--penetrations", "0.05", "--no-dgrs", "--out", str(out)])
    assert code == EXIT_OK
    run = RunStore(results).list_runs("sweep")[0]
    assert run["summary"]["points"][0]["status"] == "optimal"
    assert (out / "sweep.csv").exists()
