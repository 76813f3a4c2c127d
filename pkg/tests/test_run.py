from pathlib import Path
import json
import shutil
import sys

import pytest

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

from wdn_design.run import main

FAST_DESIGN = "design:\n  starts_per_tank: 2\n  max_local_evaluations: 60\n"


def _config(tmp_path: Path, text: str) -> str:
    path = tmp_path / "config.yaml"
    path.write_text(text, encoding="utf-8")
    return str(path)


def test_solve_prints_machine_output(case_path, capsys) -> None:
    assert main(["solve", str(case_path("a")), "--format", "machine"]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["command"] == "solve"
    assert payload["summary"]["converged"] is True
    assert set(payload["tables"]) == {"pipes", "nodes"}


def test_solve_output_is_byte_identical_across_runs(case_path, capsys) -> None:
    main(["solve", str(case_path("c")), "--format", "machine", "--reference"])
    first = capsys.readouterr().out
    main(["solve", str(case_path("c")), "--format", "machine", "--reference"])
    assert capsys.readouterr().out == first
    assert "mae" in json.loads(first)["tables"]


def test_cost_writes_tables_and_manifest(case_path, tmp_path: Path, capsys) -> None:
    manifest = tmp_path / "run_manifest.json"
    code = main(
        ["cost", str(case_path("b")), "--output-dir", str(tmp_path / "tables"), "--manifest", str(manifest)]
    )
    assert code == 0
    assert "== costs ==" in capsys.readouterr().out
    for name in ("costs", "pumps", "tanks", "pipe_costs"):
        assert (tmp_path / "tables" / f"cost_{name}.csv").exists()
    recorded = json.loads(manifest.read_text(encoding="utf-8"))
    assert recorded["command"] == "cost"
    assert recorded["parameters"]["economics"]["lifespan"] == 25


def test_design_with_seed_is_deterministic(case_path, tmp_path: Path, capsys) -> None:
    config = _config(tmp_path, FAST_DESIGN)
    args = ["design", str(case_path("b")), "--config", config, "--seed", "4", "--format", "machine"]
    assert main(args) == 0
    first = capsys.readouterr().out
    assert main(args) == 0
    assert capsys.readouterr().out == first
    payload = json.loads(first)
    assert payload["summary"]["seed"] == 4
    assert "comparison" in payload["tables"]


def test_parse_error_exit_code(tmp_path: Path, capsys) -> None:
    path = tmp_path / "broken.wdn"
    path.write_text("[OPTIONS]\nheadloss HW\n[PIPES]\n1 a b 10\n", encoding="utf-8")
    assert main(["solve", str(path)]) == 1
    assert "arity mismatch" in capsys.readouterr().err


def test_missing_file_exit_code(tmp_path: Path) -> None:
    assert main(["solve", str(tmp_path / "absent.wdn")]) == 1


def test_network_validation_exit_code(tmp_path: Path, capsys) -> None:
    path = tmp_path / "split.wdn"
    path.write_text(
        "[OPTIONS]\nheadloss HW\n[JUNCTIONS]\n1 0 1\n2 0 1\n3 0 1\n[TANKS]\nT 0 10 0\n"
        "[PIPES]\n1 T 1 100 100 130\n2 2 3 100 100 130\n",
        encoding="utf-8",
    )
    assert main(["solve", str(path)]) == 2
    assert "disconnected" in capsys.readouterr().err


def test_cost_without_economics_exit_code(case_path, tmp_path: Path, capsys) -> None:
    text = case_path("a").read_text(encoding="utf-8")
    head, tail = text.split("[ECONOMICS]")
    path = tmp_path / "no_economics.wdn"
    path.write_text(head + "[WIND]" + tail.split("[WIND]")[1], encoding="utf-8")
    assert main(["cost", str(path)]) == 2
    assert "[ECONOMICS]" in capsys.readouterr().err


def test_convergence_failure_prints_best_iterate(case_path, tmp_path: Path, capsys) -> None:
    config = _config(tmp_path, "solver:\n  max_iterations: 1\n")
    assert main(["solve", str(case_path("a")), "--config", config, "--format", "machine"]) == 3
    captured = capsys.readouterr()
    payload = json.loads(captured.out)
    assert payload["summary"]["converged"] is False
    assert payload["summary"]["iterations"] == 1
    assert set(payload["tables"]) == {"pipes", "nodes"}
    assert "No convergence" in captured.err


def test_infeasible_design_exit_code(case_path, tmp_path: Path, capsys) -> None:
    config = _config(tmp_path, FAST_DESIGN + "  max_escalations: 1\n")
    path = tmp_path / "narrow.wdn"
    path.write_text(case_path("a").read_text(encoding="utf-8").replace("p_max 30", "p_max 10.5"), encoding="utf-8")
    assert main(["design", str(path), "--config", config]) == 4
    assert "least-violating candidate" in capsys.readouterr().err


def test_validate_passes_on_bundled_cases(capsys) -> None:
    assert main(["validate", "--case", "a", "--case", "b", "--format", "machine"]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["summary"]["failed"] == 0


def test_validate_reports_a_perturbed_case(case_path, tmp_path: Path, capsys) -> None:
    data_dir = tmp_path / "cases"
    data_dir.mkdir()
    shutil.copy(case_path("a"), data_dir / "case_a.wdn")
    target = data_dir / "case_a.wdn"
    target.write_text(target.read_text(encoding="utf-8").replace("flow 1 0.249", "flow 1 0.349"), encoding="utf-8")
    assert main(["validate", "--case", "a", "--data-dir", str(data_dir)]) == 5
    captured = capsys.readouterr()
    assert "flow_max_abs_modeled" in captured.err
    assert "== checks ==" in captured.out


@pytest.mark.parametrize("argv", [["solve"], ["validate", "--case", "z"], ["design", "x.wdn", "--loops", "manual"]])
def test_bad_arguments_exit_through_argparse(argv) -> None:
    with pytest.raises(SystemExit) as caught:
        main(argv)
    assert caught.value.code == 2
