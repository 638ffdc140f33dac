"""
Scenario files.

A scenario is a JSON document describing one Monte-Carlo experiment::

    {
      "schema_version": 1,
      "name": "fig7",
      "dims": {"K": 3, "M": 2, "N_rx": 2, "Ns": 1, "N_sc": 1},
      "channel": {"model": "rayleigh"},
      "snr": "0:5:50",
      "strategies": ["closed_ia", "tdma"],
      "trials": 500,
      "seed": 2010,
      "solver": {"max_iter": 5000, "tol": 1e-8, "restarts": 3}
    }

``M`` and ``N_rx`` take either one count for every user or a list. ``snr``
is ``"lo:step:hi"`` (inclusive), a comma separated string or a JSON list.
Channel models:

``rayleigh``
    i.i.d. CN(0, 1) entries.
``kronecker``
    ``rho_tx`` and ``rho_rx`` (scalar or one per user) build exponential
    correlation matrices.
``selective``
    tapped delay line with ``taps`` uniform taps, or an explicit ``powers``
    list, or ``decay_db`` for an exponential profile.
``collinear``
    maximum link collinearity ``target_c``; ``cross_only: true`` measures it
    over cross links only.
``file``
    ``paths``: channel files, relative to the scenario file.

Every model accepts ``sir_db``, which weakens the cross links after
normalization.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Optional

import jsonschema

from ..channel import ChannelError, NetworkDims
from ..metrics import MetricError, SnrGrid
from ..precoding.solution import STRATEGIES

SCHEMA_VERSION = 1
BUILTINS = ("fig7", "fig10", "fig11", "fig13")
MODELS = ("rayleigh", "kronecker", "selective", "collinear", "file")


class ScenarioError(ValueError):
    """Invalid scenario. ``field`` names the offending entry."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


_count = {"oneOf": [{"type": "integer", "minimum": 1},
                    {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1}]}
_rho = {"oneOf": [{"type": "number", "minimum": 0, "maximum": 1},
                  {"type": "array", "items": {"type": "number", "minimum": 0, "maximum": 1}}]}

SCHEMA = {
    "type": "object",
    "required": ["schema_version", "name", "dims", "channel", "snr", "strategies", "trials", "seed"],
    "additionalProperties": False,
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "name": {"type": "string", "pattern": "^[A-Za-z0-9_.-]+$"},
        "description": {"type": "string"},
        "dims": {
            "type": "object",
            "required": ["K", "M", "N_rx"],
            "additionalProperties": False,
            "properties": {
                "K": {"type": "integer", "minimum": 1},
                "M": _count,
                "N_rx": _count,
                "Ns": {"type": "integer", "minimum": 1},
                "N_sc": {"type": "integer", "minimum": 1},
            },
        },
        "channel": {
            "type": "object",
            "required": ["model"],
            "additionalProperties": False,
            "properties": {
                "model": {"enum": list(MODELS)},
                "rho_tx": _rho,
                "rho_rx": _rho,
                "taps": {"type": "integer", "minimum": 1},
                "powers": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1},
                "decay_db": {"type": "number", "minimum": 0},
                "target_c": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
                "cross_only": {"type": "boolean"},
                "paths": {"type": "array", "items": {"type": "string"}, "minItems": 1},
                "sir_db": {"type": "number"},
            },
        },
        "snr": {"oneOf": [{"type": "string"},
                          {"type": "array", "items": {"type": "number"}, "minItems": 1}]},
        "strategies": {"type": "array", "items": {"enum": list(STRATEGIES)}, "minItems": 1,
                       "uniqueItems": True},
        "trials": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "solver": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "tol": {"type": "number", "exclusiveMinimum": 0},
                "max_iter": {"type": "integer", "minimum": 1},
                "restarts": {"type": "integer", "minimum": 1},
                "eig_choice": {"enum": [0, 1, "best"]},
                "dof_window": {"type": "array", "items": {"type": "number"},
                               "minItems": 2, "maxItems": 2},
                "tdma_mode": {"enum": ["subcarrier", "symbol"]},
                "select_snr_db": {"type": "number"},
            },
        },
        "sweep": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "targets": {"type": "array", "minItems": 1,
                            "items": {"type": "number", "minimum": 0, "exclusiveMaximum": 1}},
            },
        },
    },
}


@dataclass(frozen=True)
class SolverOptions:
    tol: float = 1e-8
    max_iter: int = 5000
    restarts: int = 3
    eig_choice: Any = 0
    dof_window: tuple = (30.0, 50.0)
    tdma_mode: str = "subcarrier"
    select_snr_db: float = 40.0


@dataclass(frozen=True)
class Scenario:
    name: str
    dims: NetworkDims
    channel: dict
    snr: SnrGrid
    strategies: tuple
    trials: int
    seed: int
    solver: SolverOptions = SolverOptions()
    targets: tuple = ()
    base_dir: Optional[Path] = field(default=None, compare=False)

    def replace(self, **changes) -> "Scenario":
        out = dataclasses.replace(self, **changes)
        _check_semantics(out)
        return out

    def to_dict(self) -> dict:
        d = {
            "schema_version": SCHEMA_VERSION,
            "name": self.name,
            "dims": self.dims.to_dict(),
            "channel": dict(self.channel),
            "snr": [float(x) for x in self.snr.points],
            "strategies": list(self.strategies),
            "trials": self.trials,
            "seed": self.seed,
            "solver": {**dataclasses.asdict(self.solver),
                       "dof_window": list(self.solver.dof_window)},
        }
        if self.targets:
            d["sweep"] = {"targets": list(self.targets)}
        return d


def _field_path(err: jsonschema.ValidationError) -> str:
    parts = []
    for p in err.absolute_path:
        parts.append(f"[{p}]" if isinstance(p, int) else (f".{p}" if parts else str(p)))
    return "".join(parts) or "<root>"


def _expand(value, K, name):
    if isinstance(value, int):
        return (value,) * K
    if len(value) != K:
        raise ScenarioError(f"dims.{name}", f"needs {K} entries, got {len(value)}")
    return tuple(value)


def _check_semantics(s: Scenario) -> None:
    if "closed_ia" in s.strategies and not s.dims.closed_form_solvable:
        raise ScenarioError("strategies", "closed_ia needs K=3, 2x2 antennas and Ns=1")
    if "iter_ia" in s.strategies and any(n <= s.dims.Ns for n in s.dims.N_rx):
        raise ScenarioError("strategies", "iter_ia needs Ns < N_rx for every user")
    ch = s.channel
    model = ch["model"]
    if model == "kronecker" and ("rho_tx" not in ch or "rho_rx" not in ch):
        raise ScenarioError("channel", "kronecker model needs rho_tx and rho_rx")
    if model == "selective":
        given = [k for k in ("taps", "powers") if k in ch]
        if len(given) != 1:
            raise ScenarioError("channel", "selective model needs exactly one of taps or powers")
        L = ch.get("taps") or len(ch["powers"])
        if L > s.dims.N_sc:
            raise ScenarioError("channel.taps", f"{L} taps exceed N_sc={s.dims.N_sc}")
    if model == "collinear":
        if "target_c" not in ch:
            raise ScenarioError("channel.target_c", "collinear model needs target_c")
        if len(set(s.dims.M)) != 1 or len(set(s.dims.N_rx)) != 1:
            raise ScenarioError("dims", "collinear model needs equal antenna counts on all links")
    if model == "file":
        if "paths" not in ch:
            raise ScenarioError("channel.paths", "file model needs paths")
        if s.trials > len(ch["paths"]):
            raise ScenarioError("trials", f"{s.trials} trials but only {len(ch['paths'])} channel files")
    lo, hi = s.solver.dof_window
    if hi <= lo:
        raise ScenarioError("solver.dof_window", "upper bound must exceed lower bound")


def from_dict(obj: dict, base_dir: Optional[Path] = None) -> Scenario:
    """Validate a parsed scenario document and build a :class:`Scenario`."""
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(obj), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        raise ScenarioError(_field_path(err), err.message)
    d = obj["dims"]
    K = d["K"]
    try:
        dims = NetworkDims(K, _expand(d["M"], K, "M"), _expand(d["N_rx"], K, "N_rx"),
                           d.get("Ns", 1), d.get("N_sc", 1))
    except ChannelError as exc:
        raise ScenarioError("dims", str(exc)) from exc
    try:
        snr = obj["snr"]
        grid = SnrGrid.parse(snr) if isinstance(snr, str) else SnrGrid(snr)
    except (MetricError, ValueError) as exc:
        raise ScenarioError("snr", str(exc)) from exc
    solver = dict(obj.get("solver", {}))
    if "dof_window" in solver:
        solver["dof_window"] = tuple(float(x) for x in solver["dof_window"])
    s = Scenario(
        name=obj["name"],
        dims=dims,
        channel=dict(obj["channel"]),
        snr=grid,
        strategies=tuple(obj["strategies"]),
        trials=obj["trials"],
        seed=obj["seed"],
        solver=SolverOptions(**solver),
        targets=tuple(obj.get("sweep", {}).get("targets", ())),
        base_dir=base_dir,
    )
    _check_semantics(s)
    return s


def loads(text: str, base_dir: Optional[Path] = None) -> Scenario:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError("<document>", f"invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    return from_dict(obj, base_dir)


def load(path_or_name) -> Scenario:
    """Load a scenario file, or a built-in scenario by name (``fig7`` ...)."""
    if str(path_or_name) in BUILTINS:
        text = resources.files(__package__).joinpath("scenarios", f"{path_or_name}.json").read_text()
        return loads(text)
    path = Path(path_or_name)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError("<file>", f"cannot read {path}: {exc.strerror}") from exc
    return loads(text, base_dir=path.parent)
