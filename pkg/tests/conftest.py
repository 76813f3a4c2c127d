from pathlib import Path
import sys

import pytest

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

from wdn_design.config import resolve_config
from wdn_design.scenario import Scenario, load_scenario

CASES_DIR = Path(__file__).resolve().parents[1] / "data" / "cases"


@pytest.fixture
def case_path():
    def _path(case: str) -> Path:
        return CASES_DIR / f"case_{case}.wdn"

    return _path


@pytest.fixture
def load_case(case_path):
    def _load(case: str, loops: str = "auto", overrides=None) -> Scenario:
        return load_scenario(case_path(case), resolve_config(), overrides, loops)

    return _load
