"""JSON configuration: schema validation, defaults, pre-parsed expressions."""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import jsonschema

from .expr import ExprError, VectorExpr
from .geometry import CONTAINMENT, GridSpec, ObstacleShape
from .linalg import SolveConfig

COMMANDS = ("tensors", "simulate", "limit", "sweep", "report")


class ConfigError(ValueError):
    def __init__(self, pointer: str, message: str):
        self.pointer = pointer
        super().__init__(f"{pointer or '/'}: {message}")


_num = {"type": "number"}
_expr_pair = {"type": "array", "items": {"type": "string"}, "minItems": 2, "maxItems": 2}
_shape = {
    "type": "object",
    "properties": {
        "shape": {"enum": ["none", "disk", "superellipse"]},
        "radius": {"type": "number", "exclusiveMinimum": 0, "maximum": CONTAINMENT},
        "rx": {"type": "number", "exclusiveMinimum": 0, "maximum": CONTAINMENT},
        "ry": {"type": "number", "exclusiveMinimum": 0, "maximum": CONTAINMENT},
        "p": {"type": "number", "minimum": 2, "maximum": 20},
    },
    "required": ["shape"],
    "additionalProperties": False,
    "allOf": [
        {"if": {"properties": {"shape": {"const": "disk"}}}, "then": {"required": ["radius"]}},
        {"if": {"properties": {"shape": {"const": "superellipse"}}},
         "then": {"required": ["rx", "ry"]}},
    ],
}
_rel_tol = {"type": "number", "exclusiveMinimum": 0, "maximum": 1e-2}
_even_n = {"type": "integer", "minimum": 8, "multipleOf": 2}
_times = {"type": "array", "items": {"type": "number", "minimum": 0}}

SCHEMAS: dict[str, dict] = {
    "tensors": {"properties": {"shape": _shape, "n": _even_n, "rel_tol": _rel_tol},
                "required": ["shape"]},
    "simulate": {"properties": {"shape": _shape, "m": {"type": "integer", "minimum": 2},
                                "n": _even_n, "t_end": {"type": "number", "exclusiveMinimum": 0},
                                "dt": {"type": "number", "minimum": 0}, "F": _expr_pair,
                                "H": _expr_pair, "d_init": _expr_pair, "rel_tol": _rel_tol,
                                "snapshot_times": _times, "scale_forcing": {"type": "boolean"}},
                 "required": ["shape"]},
    "limit": {"properties": {"shape": _shape, "n_cell": _even_n,
                             "N": {"type": "integer", "minimum": 4},
                             "t_end": {"type": "number", "exclusiveMinimum": 0},
                             "dt": {"type": "number", "minimum": 0}, "F": _expr_pair,
                             "H": _expr_pair, "d_init": _expr_pair, "rel_tol": _rel_tol,
                             "snapshot_times": _times},
              "required": ["shape"]},
    "sweep": {"properties": {"shape": _shape,
                             "eps_list": {"type": "array", "minItems": 3,
                                          "items": {"type": "number", "exclusiveMinimum": 0,
                                                    "maximum": 0.5}},
                             "n_per_cell": _even_n,
                             "t_end": {"type": "number", "exclusiveMinimum": 0},
                             "F": _expr_pair, "H": _expr_pair, "d_init": _expr_pair,
                             "reference_grid_n": {"type": "integer", "minimum": 8},
                             "test_functions": {"type": "array", "items": _expr_pair,
                                                "minItems": 1},
                             "n_snapshots": {"type": "integer", "minimum": 2},
                             "rel_tol": _rel_tol},
              "required": []},
    "report": {"properties": {"input": {"type": "string"}}, "required": ["input"]},
}
for _name, _s in SCHEMAS.items():
    _s["type"] = "object"
    _s["additionalProperties"] = False
    _s["properties"]["command"] = {"const": _name}

DEFAULTS: dict[str, dict] = {
    "tensors": {"n": 64, "rel_tol": 1e-10},
    "simulate": {"m": 4, "n": 16, "t_end": 0.1, "dt": 0.0, "F": ["sin(2*pi*y)", "0"],
                 "H": ["0", "0"], "d_init": ["cos(pi*x)", "sin(pi*x)"], "rel_tol": 1e-8,
                 "scale_forcing": True},
    "limit": {"n_cell": 16, "N": 256, "t_end": 0.1, "dt": 0.0, "F": ["sin(2*pi*y)", "0"],
              "H": ["0", "0"], "d_init": ["cos(pi*x)", "sin(pi*x)"], "rel_tol": 1e-10},
    "sweep": {"shape": {"shape": "disk", "radius": 0.25}, "eps_list": [0.25, 0.125, 0.0625],
              "n_per_cell": 16, "t_end": 0.1, "F": ["sin(2*pi*y)", "0"], "H": ["0", "0"],
              "d_init": ["cos(pi*x)", "sin(pi*x)"], "reference_grid_n": 256,
              "test_functions": [["1", "1"], ["sin(pi*x)*sin(pi*y)", "sin(pi*x)*sin(pi*y)"],
                                 ["x*y", "x*y"]],
              "n_snapshots": 11, "rel_tol": 1e-8},
    "report": {},
}
EXPR_KEYS = ("F", "H", "d_init")


@dataclass(frozen=True)
class ConfigRecord:
    command: str
    values: dict

    def echo(self) -> dict:
        """JSON form that reloads to an equal record."""
        return dict(copy.deepcopy(self.values), command=self.command)

    @property
    def shape(self) -> ObstacleShape:
        return ObstacleShape.from_dict(self.values["shape"])

    def expr(self, key: str) -> VectorExpr:
        return VectorExpr.of(self.values[key])

    def sim_config(self):
        from .perforated import SimConfig
        v = self.values
        snaps = v.get("snapshot_times")
        return SimConfig(grid=GridSpec(m=v["m"], n=v["n"], shape=self.shape), t_end=v["t_end"],
                         dt=v["dt"], forcing_f=self.expr("F"), forcing_h=self.expr("H"),
                         d_init=self.expr("d_init"), solver=SolveConfig(rel_tol=v["rel_tol"]),
                         snapshot_times=tuple(snaps) if snaps is not None else None,
                         scale_forcing=v["scale_forcing"])

    def sweep_config(self, threads: int = 1):
        from .harness import SweepConfig
        v = self.values
        return SweepConfig(eps_list=tuple(v["eps_list"]), n_per_cell=v["n_per_cell"],
                           shape=self.shape, t_end=v["t_end"], forcing_f=self.expr("F"),
                           forcing_h=self.expr("H"), d_init=self.expr("d_init"),
                           reference_grid_n=v["reference_grid_n"],
                           test_functions=tuple(VectorExpr.of(p) for p in v["test_functions"]),
                           n_snapshots=v["n_snapshots"],
                           solver=SolveConfig(rel_tol=v["rel_tol"]), threads=threads)


def _pointer(path) -> str:
    return "".join(f"/{p}" for p in path)


def validate(data: Any, command: str) -> ConfigRecord:
    if not isinstance(data, dict):
        raise ConfigError("", "configuration must be a JSON object")
    command = data.get("command", command)
    if command not in COMMANDS:
        raise ConfigError("/command", f"unknown command {command!r}")
    schema = SCHEMAS[command]
    err = jsonschema.exceptions.best_match(
        jsonschema.Draft202012Validator(schema).iter_errors(data))
    if err is not None:
        raise ConfigError(_pointer(err.absolute_path), err.message)
    values = copy.deepcopy(DEFAULTS[command])
    values.update({k: copy.deepcopy(v) for k, v in data.items() if k != "command"})
    for key in EXPR_KEYS:
        if key in values:
            for i, text in enumerate(values[key]):
                _check_expr(text, f"/{key}/{i}")
    for j, pair in enumerate(values.get("test_functions", [])):
        for i, text in enumerate(pair):
            _check_expr(text, f"/test_functions/{j}/{i}")
    if "shape" in values:
        try:
            shape = ObstacleShape.from_dict(values["shape"])
        except ValueError as exc:
            raise ConfigError("/shape", str(exc)) from exc
        values["shape"] = shape.to_dict()
    if command == "sweep":
        try:
            ConfigRecord(command, values).sweep_config()
        except ValueError as exc:
            raise ConfigError("/eps_list", str(exc)) from exc
    return ConfigRecord(command, values)


def _check_expr(text: str, pointer: str) -> None:
    from .expr import parse
    try:
        parse(text)
    except ExprError as exc:
        raise ConfigError(pointer, str(exc)) from exc


def load_config(path, command: str = "sweep") -> ConfigRecord:
    """Parse and validate a JSON config file; ``command`` applies unless the file names one."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("", f"cannot read {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("", f"invalid JSON: {exc}") from exc
    return validate(data, command)
