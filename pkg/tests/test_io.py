from pathlib import Path
import sys

import pandas as pd
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

from wdn_design.config import DEFAULTS, merge_config, resolve_config
from wdn_design.io import ParseError, parse_input, read_input, render_input
from wdn_design.pipeline import run_solve
from wdn_design.report import Report, from_machine, render_table, to_machine
from wdn_design.scenario import scenario_settings

MINIMAL = """
[OPTIONS]
headloss HW

[JUNCTIONS]
1 10 1.0

[TANKS]
T 10 20 0

[PIPES]
1 T 1 100 100 130
"""


def _error(text: str) -> ParseError:
    with pytest.raises(ParseError) as caught:
        parse_input(text, "net.wdn")
    return caught.value


@pytest.mark.parametrize("case", ["a", "b", "c"])
def test_rendered_input_parses_back_to_the_same_document(case_path, case: str) -> None:
    document = read_input(case_path(case))
    assert parse_input(render_input(document)) == document


def test_parsed_rows_are_typed(case_path) -> None:
    document = read_input(case_path("a"))
    assert document.rows("PIPES")[0] == {"id": "1", "from": "1", "to": "2", "length": 100.0, "diameter": 40.0, "roughness": 130.0}
    tank = document.rows("TANKS")[0]
    assert tank["volume"] is None and tank["expected_supply"] == 0.5
    assert document.baseline() == {"5": (20.84, 0.0)}
    assert document.reference("flow")["6"] == 0.5
    assert document.loops()[1]["pipes"] == ("2", "-3", "-5")


def test_list_valued_keywords() -> None:
    document = parse_input(MINIMAL + "\n[ECONOMICS]\npipeline_coefficients 1 2 3\ndiameter_catalog_mm 100\nlifespan 20\n")
    values = document.key_values("ECONOMICS")
    assert values == {"pipeline_coefficients": [1.0, 2.0, 3.0], "diameter_catalog_mm": [100.0], "lifespan": 20.0}


def test_unknown_section_reports_its_line() -> None:
    error = _error(MINIMAL + "\n[VALVES]\n")
    assert "unknown section" in error.message
    assert error.line == MINIMAL.count("\n") + 2
    assert str(error).startswith("net.wdn:")


def test_arity_mismatch_points_at_the_row() -> None:
    error = _error(MINIMAL.replace("1 T 1 100 100 130", "1 T 1 100 100"))
    assert "arity mismatch" in error.message
    assert error.line == MINIMAL.splitlines().index("1 T 1 100 100 130") + 1


def test_non_numeric_field_reports_its_column() -> None:
    error = _error(MINIMAL.replace("1 10 1.0", "1 ten 1.0"))
    assert "non-numeric" in error.message
    assert error.column == 3


@pytest.mark.parametrize(
    "text, message",
    [
        (MINIMAL.replace("[PIPES]\n1 T 1 100 100 130\n", ""), "no pipes"),
        (MINIMAL.replace("headloss HW", "headloss XX"), "unknown headloss model"),
        (MINIMAL.replace("headloss HW", "roughness 1"), "unknown keyword"),
        (MINIMAL + "[TANKS]\n", "appears twice"),
        (MINIMAL.replace("1 10 1.0", "1 10 1.0\n1 12 0.5"), "duplicate node id"),
        (MINIMAL + "[LOOPS]\nL1 open 1\n", "unknown loop kind"),
        ("1 2 3\n" + MINIMAL, "data before any section"),
        (MINIMAL.replace("[OPTIONS]\nheadloss HW\n", ""), "missing required section [OPTIONS]"),
    ],
)
def test_malformed_inputs_are_rejected(text: str, message: str) -> None:
    assert message in _error(text).message


def test_missing_file_is_a_parse_error(tmp_path: Path) -> None:
    with pytest.raises(ParseError, match="file not found"):
        read_input(tmp_path / "absent.wdn")


def test_configuration_layers(tmp_path: Path) -> None:
    config_path = tmp_path / "config.yaml"
    config_path.write_text("solver:\n  tol_mass: 1.0e-8\ndesign:\n  seed: 5\n  p_min: 12\n", encoding="utf-8")
    settings = resolve_config(config_path)
    assert settings["solver"]["tol_mass"] == 1e-8
    assert settings["solver"]["max_iterations"] == DEFAULTS["solver"]["max_iterations"]
    document = parse_input(MINIMAL + "\n[DESIGN]\np_min 11\n")
    merged = scenario_settings(settings, document, {"design": {"seed": 9}})
    assert merged["design"]["p_min"] == 11.0
    assert merged["design"]["seed"] == 9
    assert DEFAULTS["design"]["seed"] == 7
    assert merge_config({"a": {"b": 1}}, {"a": {"c": 2}}) == {"a": {"b": 1, "c": 2}}


def test_machine_output_round_trips(case_path) -> None:
    report = run_solve(case_path("a"), resolve_config(), reference=True)
    text = to_machine(report)
    assert to_machine(from_machine(text)) == text
    parsed = from_machine(text)
    assert parsed.summary["converged"] is True
    assert parsed.tables["pipes"]["pipe"].tolist() == ["1", "2", "3", "4", "5", "6"]
    assert parsed.tables["pipes"]["friction_factor"].isna().all()


def test_table_rendering_lists_every_table() -> None:
    report = Report(
        command="solve",
        tables={"pipes": pd.DataFrame({"pipe": ["1"], "flow_Ls": [0.5]}), "empty": pd.DataFrame(columns=["x"])},
        summary={"converged": True},
    )
    text = render_table(report)
    assert "== pipes ==" in text
    assert "(empty)" in text
    assert "converged: True" in text
