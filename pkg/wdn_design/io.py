"""Reading and writing .wdn network files, tables and JSON."""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Tuple

import pandas as pd

SECTIONS = (
    "OPTIONS",
    "JUNCTIONS",
    "TANKS",
    "PIPES",
    "PUMPS",
    "ECONOMICS",
    "WIND",
    "FOUNDATION",
    "DESIGN",
    "LOOPS",
    "REFERENCE",
)
HEADLOSS_MODELS = ("HW", "DW")
REFERENCE_KINDS = ("flow", "pressure", "head")
DEFAULT_LABEL = "modeled"
STAR = "*"

# (column name, type, optional); type is "id", "float", "float*" ("*" allowed) or "str"
TABLE_COLUMNS: Dict[str, Tuple[Tuple[str, str, bool], ...]] = {
    "JUNCTIONS": (("id", "id", False), ("elevation", "float", False), ("demand", "float", False)),
    "TANKS": (
        ("id", "id", False),
        ("elevation", "float", False),
        ("water_depth", "float", False),
        ("height_above_ground", "float", False),
        ("volume", "float*", True),
        ("expected_supply", "float*", True),
    ),
    "PIPES": (
        ("id", "id", False),
        ("from", "id", False),
        ("to", "id", False),
        ("length", "float", False),
        ("diameter", "float", False),
        ("roughness", "float", False),
    ),
    "PUMPS": (
        ("tank", "id", False),
        ("elevation", "float*", False),
        ("supply_length", "float*", False),
        ("supply_diameter", "float*", False),
        ("daily_hours", "float", False),
        ("efficiency", "float", False),
        ("operating_hours", "float", False),
        ("resistance", "float*", True),
    ),
    "REFERENCE": (("kind", "str", False), ("id", "id", False), ("value", "float", False), ("label", "str", True)),
}

# key -> (type, minimum arity, maximum arity)
KEY_VALUE_KEYS: Dict[str, Dict[str, Tuple[str, int, int]]] = {
    "OPTIONS": {
        "headloss": ("str", 1, 1),
        "viscosity": ("float", 1, 1),
        "density": ("float", 1, 1),
        "specific_weight": ("float", 1, 1),
        "gravity": ("float", 1, 1),
        "day_factor": ("float", 1, 1),
        "hour_factor": ("float", 1, 1),
        "network_hours": ("float", 1, 1),
    },
    "ECONOMICS": {
        "energy_price": ("float", 1, 1),
        "interest_rate": ("float", 1, 1),
        "energy_escalation": ("float", 1, 1),
        "lifespan": ("float", 1, 1),
        "material_unit_cost": ("float", 1, 1),
        "pipeline_coefficients": ("float", 1, 8),
        "supply_velocity_max": ("float", 1, 1),
        "supply_pipe_length": ("float", 1, 1),
        "pump_depth_below_base": ("float", 1, 1),
        "diameter_catalog_mm": ("float", 1, 256),
        "operational_cost_rate": ("float", 1, 1),
        "fill_duration": ("float", 1, 1),
    },
    "WIND": {"speed": ("float", 1, 1), "exponent": ("float", 1, 1)},
    "FOUNDATION": {name: ("float", 1, 1) for name in ("alpha1", "beta1", "alpha2", "beta2", "alpha3", "beta3")},
    "DESIGN": {
        **{
            name: ("float", 1, 1)
            for name in ("p_min", "p_max", "h_r_min", "h_r_max", "h_b_min", "h_b_max", "z_max", "pressure_tolerance")
        },
        **{
            name: ("int", 1, 1)
            for name in ("starts_per_tank", "max_starts", "max_escalations", "max_local_evaluations", "seed")
        },
        "penalty_weight": ("float", 1, 1),
        "penalty_growth": ("float", 1, 1),
        "baseline": ("baseline", 3, 3),
    },
}


class ParseError(ValueError):
    """Input file problem with its position."""

    def __init__(self, message: str, line: int = 0, column: int = 0, path: str = "<input>"):
        super().__init__(message)
        self.message = message
        self.line = line
        self.column = column
        self.path = path

    def __str__(self) -> str:
        return f"{self.path}:{self.line}:{self.column}: {self.message}"


@dataclass
class InputDocument:
    sections: Dict[str, List[Dict[str, Any]]]
    path: str = field(default="<input>", compare=False)

    def rows(self, name: str) -> List[Dict[str, Any]]:
        return self.sections.get(name, [])

    def has(self, name: str) -> bool:
        return name in self.sections

    def key_values(self, name: str) -> Dict[str, Any]:
        """Key/value rows as a mapping; multi-valued keys map to lists."""
        values: Dict[str, Any] = {}
        for row in self.rows(name):
            if row["key"] == "baseline":
                continue
            values[row["key"]] = row["values"][0] if len(row["values"]) == 1 and row["key"] not in _LIST_KEYS else list(row["values"])
        return values

    def baseline(self) -> Dict[str, Tuple[float, float]]:
        return {row["values"][0]: (row["values"][1], row["values"][2]) for row in self.rows("DESIGN") if row["key"] == "baseline"}

    def loops(self) -> List[Dict[str, Any]]:
        return self.rows("LOOPS")

    def reference(self, kind: str, label: str = DEFAULT_LABEL) -> Dict[str, float]:
        return {row["id"]: row["value"] for row in self.rows("REFERENCE") if row["kind"] == kind and row["label"] == label}

    def reference_labels(self, kind: str) -> List[str]:
        return sorted({row["label"] for row in self.rows("REFERENCE") if row["kind"] == kind})


_LIST_KEYS = {"pipeline_coefficients", "diameter_catalog_mm"}


def _tokens(text: str) -> List[Tuple[str, int]]:
    return [(match.group(0), match.start() + 1) for match in re.finditer(r"\S+", text)]


def _number(token: str, column: int, line: int, name: str, path: str, allow_star: bool = False):
    if allow_star and token == STAR:
        return None
    try:
        value = float(token)
    except ValueError:
        raise ParseError(f"non-numeric field {token!r} for {name}", line, column, path) from None
    if not math.isfinite(value):
        raise ParseError(f"non-finite value {token!r} for {name}", line, column, path)
    return value


def _integer(token: str, column: int, line: int, name: str, path: str) -> int:
    try:
        return int(token)
    except ValueError:
        raise ParseError(f"expected an integer for {name}, got {token!r}", line, column, path) from None


def _table_row(section: str, tokens: List[Tuple[str, int]], line: int, path: str) -> Dict[str, Any]:
    columns = TABLE_COLUMNS[section]
    required = sum(1 for _, _, optional in columns if not optional)
    if not required <= len(tokens) <= len(columns):
        raise ParseError(
            f"arity mismatch in [{section}]: expected {required}-{len(columns)} fields, got {len(tokens)}",
            line,
            tokens[len(columns)][1] if len(tokens) > len(columns) else tokens[-1][1],
            path,
        )
    row: Dict[str, Any] = {}
    for index, (name, kind, _) in enumerate(columns):
        if index >= len(tokens):
            row[name] = DEFAULT_LABEL if section == "REFERENCE" and name == "label" else None
            continue
        token, column = tokens[index]
        if kind in ("id", "str"):
            row[name] = token
        else:
            row[name] = _number(token, column, line, name, path, allow_star=kind == "float*")
    if section == "REFERENCE" and row["kind"] not in REFERENCE_KINDS:
        raise ParseError(f"unknown keyword {row['kind']!r}; expected one of {REFERENCE_KINDS}", line, tokens[0][1], path)
    return row


def _key_value_row(section: str, tokens: List[Tuple[str, int]], line: int, path: str) -> Dict[str, Any]:
    key, key_column = tokens[0]
    spec = KEY_VALUE_KEYS[section].get(key)
    if spec is None:
        raise ParseError(f"unknown keyword {key!r} in [{section}]", line, key_column, path)
    kind, low, high = spec
    values = tokens[1:]
    if not low <= len(values) <= high:
        expected = str(low) if low == high else f"{low}-{high}"
        raise ParseError(f"arity mismatch for {key}: expected {expected} values, got {len(values)}", line, key_column, path)
    if kind == "str":
        parsed: List[Any] = [token for token, _ in values]
        if key == "headloss":
            parsed = [parsed[0].upper()]
            if parsed[0] not in HEADLOSS_MODELS:
                raise ParseError(f"unknown headloss model {values[0][0]!r}; expected HW or DW", line, values[0][1], path)
    elif kind == "int":
        parsed = [_integer(token, column, line, key, path) for token, column in values]
    elif kind == "baseline":
        parsed = [values[0][0]] + [_number(token, column, line, key, path) for token, column in values[1:]]
    else:
        parsed = [_number(token, column, line, key, path) for token, column in values]
    return {"key": key, "values": tuple(parsed)}


def _loop_row(tokens: List[Tuple[str, int]], line: int, path: str) -> Dict[str, Any]:
    if len(tokens) < 3:
        raise ParseError("arity mismatch in [LOOPS]: expected id, kind and at least one pipe", line, tokens[0][1], path)
    kind, column = tokens[1]
    if kind != "closed" and not re.fullmatch(r"tanks:[^:\s]+:[^:\s]+", kind):
        raise ParseError(f"unknown loop kind {kind!r}; expected closed or tanks:<start>:<end>", line, column, path)
    return {"id": tokens[0][0], "kind": kind, "pipes": tuple(token for token, _ in tokens[2:])}


def _check_duplicates(document: Dict[str, List[Dict[str, Any]]], positions: Dict[Tuple[str, int], Tuple[int, int]], path: str) -> None:
    groups = {"node": ("JUNCTIONS", "TANKS"), "pipe": ("PIPES",), "pump": ("PUMPS",), "loop": ("LOOPS",)}
    for label, names in groups.items():
        seen = set()
        for name in names:
            key_field = "tank" if name == "PUMPS" else "id"
            for index, row in enumerate(document.get(name, [])):
                if row[key_field] in seen:
                    line, column = positions[(name, index)]
                    raise ParseError(f"duplicate {label} id {row[key_field]!r}", line, column, path)
                seen.add(row[key_field])
    for name in KEY_VALUE_KEYS:
        seen = set()
        for index, row in enumerate(document.get(name, [])):
            key = ("baseline", row["values"][0]) if row["key"] == "baseline" else row["key"]
            if key in seen:
                line, column = positions[(name, index)]
                raise ParseError(f"duplicate keyword {row['key']!r} in [{name}]", line, column, path)
            seen.add(key)


def parse_input(text: str, path: str = "<input>") -> InputDocument:
    """Parse .wdn text into ordered sections with typed rows."""
    sections: Dict[str, List[Dict[str, Any]]] = {}
    positions: Dict[Tuple[str, int], Tuple[int, int]] = {}
    current = None
    for line_number, raw in enumerate(text.splitlines(), start=1):
        content = raw.split("#", 1)[0]
        tokens = _tokens(content)
        if not tokens:
            continue
        header = re.fullmatch(r"\s*\[([^\]]*)\]\s*", content)
        if header:
            name = header.group(1).strip().upper()
            if name not in SECTIONS:
                raise ParseError(f"unknown section [{header.group(1)}]", line_number, tokens[0][1], path)
            if name in sections:
                raise ParseError(f"section [{name}] appears twice", line_number, tokens[0][1], path)
            sections[name] = []
            current = name
            continue
        if current is None:
            raise ParseError("data before any section header", line_number, tokens[0][1], path)
        if current in TABLE_COLUMNS:
            row = _table_row(current, tokens, line_number, path)
        elif current == "LOOPS":
            row = _loop_row(tokens, line_number, path)
        else:
            row = _key_value_row(current, tokens, line_number, path)
        positions[(current, len(sections[current]))] = (line_number, tokens[0][1])
        sections[current].append(row)

    last_line = max(len(text.splitlines()), 1)
    if "OPTIONS" not in sections:
        raise ParseError("missing required section [OPTIONS]", last_line, 1, path)
    if not any(row["key"] == "headloss" for row in sections["OPTIONS"]):
        raise ParseError("[OPTIONS] needs a headloss keyword (HW or DW)", last_line, 1, path)
    if "JUNCTIONS" not in sections and "TANKS" not in sections:
        raise ParseError("missing required section [JUNCTIONS] or [TANKS]", last_line, 1, path)
    if not sections.get("PIPES"):
        raise ParseError("no pipes", last_line, 1, path)
    _check_duplicates(sections, positions, path)
    return InputDocument(sections=sections, path=path)


def read_input(path: str | Path) -> InputDocument:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ParseError("file not found", 0, 0, str(path)) from None
    except (OSError, UnicodeDecodeError) as error:
        raise ParseError(f"cannot read file: {error}", 0, 0, str(path)) from None
    return parse_input(text, str(path))


def _format(value: Any) -> str:
    if value is None:
        return STAR
    if isinstance(value, bool):
        return str(value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def render_input(document: InputDocument) -> str:
    """Canonical .wdn text; parsing it gives back an equal document."""
    lines: List[str] = []
    for name in SECTIONS:
        if name not in document.sections:
            continue
        lines.append(f"[{name}]")
        for row in document.sections[name]:
            if name in TABLE_COLUMNS:
                fields = [_format(row[column]) for column, _, _ in TABLE_COLUMNS[name]]
            elif name == "LOOPS":
                fields = [row["id"], row["kind"], *row["pipes"]]
            else:
                fields = [row["key"], *(_format(value) for value in row["values"])]
            lines.append(" ".join(fields))
        lines.append("")
    return "\n".join(lines)


def write_json(data: Mapping[str, Any], path: str | Path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with Path(path).open("w", encoding="utf-8") as handle:
        json.dump(data, handle, indent=2, sort_keys=True)
        handle.write("\n")


def write_tidy(df: pd.DataFrame, path: str | Path) -> None:
    """Write DataFrame to CSV without index."""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, index=False)


def ensure_dirs(paths: Iterable[str | Path]) -> None:
    for path in paths:
        Path(path).mkdir(parents=True, exist_ok=True)
