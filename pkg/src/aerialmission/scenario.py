"""Scenario files: versioned JSON, schema-validated, unknown keys rejected.

A scenario plus its seed fully determines a run.  ``load_scenario`` returns a
plain dict with defaults filled in; ``scenario_hash`` is the SHA-256 of its
canonical JSON form.
"""

from __future__ import annotations

import copy
import dataclasses
import hashlib
import json
from importlib import resources

import jsonschema

from .deploy import DeviceScript
from .missions.ball import BallConfig
from .missions.balloon import BalloonConfig
from .missions.firefight import FireConfig
from .missions.pickplace import PickPlaceConfig

SCHEMA_VERSION = 1
MISSIONS = ("balloon", "ball", "pickplace", "firefight")
MISSION_CONFIGS = {"balloon": BalloonConfig, "ball": BallConfig, "pickplace": PickPlaceConfig, "firefight": FireConfig}
# config fields that hold objects rather than plain numbers
_NOT_SCALAR = {"params", "intrinsics"}

DEFAULTS = {
    "clock_limit": 900.0,
    "stop_on_complete": True,
    "uav": {},
    "world": {},
    "targets": [],
    "mission_config": {},
    "sensing": {},
    "faults": {},
    "deployment": {"enabled": True, "observe": 10.0},
    "record": {"telemetry": True},
}


class ScenarioError(ValueError):
    """Invalid scenario; ``path`` is a JSON path such as ``$.faults.detector_fn``."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path
        self.message = message


def schema() -> dict:
    text = resources.files("aerialmission").joinpath("schema/scenario.schema.json").read_text()
    return json.loads(text)


def _json_path(parts) -> str:
    out = "$"
    for p in parts:
        out += f"[{p}]" if isinstance(p, int) else f".{p}"
    return out


def config_fields(mission: str) -> set:
    return {f.name for f in dataclasses.fields(MISSION_CONFIGS[mission])} - _NOT_SCALAR


def validate(data) -> dict:
    """Check ``data`` against the schema and the cross-field rules; return it with defaults."""
    validator = jsonschema.Draft202012Validator(schema())
    errors = sorted(validator.iter_errors(data), key=lambda e: (len(e.absolute_path), list(map(str, e.absolute_path))))
    if errors:
        e = errors[0]
        raise ScenarioError(_json_path(e.absolute_path), e.message)
    sc = copy.deepcopy(data)
    for key, value in DEFAULTS.items():
        if isinstance(value, dict):
            sc[key] = {**value, **sc.get(key, {})}
        else:
            sc.setdefault(key, copy.deepcopy(value))
    mission = sc["mission"]
    allowed = config_fields(mission)
    for key in sc["mission_config"]:
        if key not in allowed:
            raise ScenarioError(f"$.mission_config.{key}", f"unknown {mission} config key")
    kinds = {"balloon": ("balloon",), "ball": ("ball",), "pickplace": ("block",), "firefight": ("fire",)}[mission]
    for i, t in enumerate(sc["targets"]):
        if t["kind"] not in kinds:
            raise ScenarioError(f"$.targets[{i}].kind", f"{t['kind']} target in a {mission} scenario")
    if mission in ("balloon", "ball") and "arena" not in sc:
        raise ScenarioError("$.arena", f"required for {mission}")
    if mission == "pickplace" and "structure" not in sc:
        raise ScenarioError("$.structure", "required for pickplace")
    if mission == "firefight" and "building" not in sc:
        raise ScenarioError("$.building", "required for firefight")
    if mission == "ball" and len(sc["targets"]) != 1:
        raise ScenarioError("$.targets", "ball scenario needs exactly one ball")
    ids = [t.get("id") for t in sc["targets"] if t.get("id")]
    if len(ids) != len(set(ids)):
        raise ScenarioError("$.targets", "duplicate target ids")
    script = sc["deployment"].get("script")
    if script is not None:
        try:
            DeviceScript.from_dict(script)
        except (TypeError, ValueError) as exc:
            raise ScenarioError("$.deployment.script", str(exc)) from None
    return sc


def load_scenario(path, overrides=()) -> dict:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ScenarioError("$", f"invalid JSON: {exc}") from None
    return validate(apply_overrides(data, overrides))


def parse_override(text: str):
    """``a.b.c=value``; the value is parsed as JSON, falling back to a plain string."""
    if "=" not in text:
        raise ScenarioError("$", f"override {text!r} is not key=value")
    key, raw = text.split("=", 1)
    if not key or any(not p for p in key.split(".")):
        raise ScenarioError("$", f"bad override key {key!r}")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.split("."), value


def apply_overrides(data: dict, overrides) -> dict:
    """Return a copy with each override applied; accepts strings or (key, value) pairs."""
    out = copy.deepcopy(data)
    for ov in overrides:
        parts, value = parse_override(ov) if isinstance(ov, str) else (ov[0].split("."), ov[1])
        node = out
        for i, p in enumerate(parts[:-1]):
            nxt = node.get(p) if isinstance(node, dict) else None
            if nxt is None:
                nxt = {}
                node[p] = nxt
            elif not isinstance(nxt, dict):
                raise ScenarioError(_json_path(parts[: i + 1]), "cannot override inside a non-object")
            node = nxt
        node[parts[-1]] = value
    return out


def canonical_json(sc: dict) -> str:
    return json.dumps(sc, sort_keys=True, separators=(",", ":"))


def scenario_hash(sc: dict) -> str:
    return hashlib.sha256(canonical_json(sc).encode()).hexdigest()


def bundled_scenarios() -> dict:
    """Name -> path of the scenario files shipped with the package."""
    root = resources.files("aerialmission").joinpath("scenarios")
    return {p.name[:-5]: str(p) for p in sorted(root.iterdir(), key=lambda p: p.name) if p.name.endswith(".json")}
