"""Scenario files: JSON schema, validation with field paths, and presets.

A scenario describes either a Monte Carlo market (``bidders`` + ``slots``), a
template instance (``classes`` + ``templates``), or both.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import jsonschema

from ..errors import ConfigError
from ..objectives import BidderModel, Scenario
from ..templates import ClassedBidder, TemplateAuction, TemplateSet
from ..valuations import ObjectiveWeights, ValueDistribution

PRESETS = ("uniform8x3", "lahaie-pennock")

_NUM = {"type": "number"}
_DIST = {
    "type": "object",
    "required": ["kind"],
    "properties": {
        "kind": {"enum": ["uniform", "lognormal", "beta", "empirical"]},
        "lo": _NUM, "hi": _NUM, "mu": _NUM, "sigma": _NUM, "a": _NUM, "b": _NUM,
        "sample": {"type": "array", "items": _NUM, "minItems": 1},
    },
    "additionalProperties": False,
}
_REQUIRED = {"uniform": ("lo", "hi"), "lognormal": ("mu", "sigma"), "beta": ("a", "b"),
             "empirical": ("sample",)}

SCHEMA = {
    "type": "object",
    "properties": {
        "name": {"type": "string"},
        "seed": {"type": "integer", "minimum": 0},
        "slots": {"type": "array", "items": _NUM, "minItems": 1},
        "bidders": {
            "type": "array", "minItems": 1,
            "items": {
                "type": "object",
                "required": ["value"],
                "properties": {
                    "count": {"type": "integer", "minimum": 1},
                    "value": _DIST,
                    "weight": {"oneOf": [_NUM, _DIST]},
                    "correlation": {"type": "number", "minimum": -1, "maximum": 1},
                },
                "additionalProperties": False,
            },
        },
        "objective": {
            "type": "object",
            "properties": {"alpha": _NUM, "beta": _NUM, "gamma": _NUM},
            "additionalProperties": False,
        },
        "classes": {
            "type": "array", "minItems": 1,
            "items": {
                "type": "object",
                "required": ["class", "value"],
                "properties": {"class": {"type": "integer", "minimum": 0}, "value": _NUM,
                               "weight": _NUM},
                "additionalProperties": False,
            },
        },
        "templates": {
            "type": "array", "minItems": 1,
            "items": {"type": "object", "patternProperties": {
                "^[0-9]+$": {"type": "array", "items": _NUM}}, "additionalProperties": False},
        },
    },
    "dependentRequired": {"bidders": ["slots"], "slots": ["bidders"],
                          "classes": ["templates"], "templates": ["classes"]},
    "anyOf": [{"required": ["bidders"]}, {"required": ["classes"]}],
}


@dataclass
class ScenarioConfig:
    name: str
    seed: int = 0
    scenario: Scenario | None = None
    weights: ObjectiveWeights = ObjectiveWeights()
    auction: TemplateAuction | None = None

    def require_market(self) -> Scenario:
        if self.scenario is None:
            raise ConfigError(f"{self.name}: this command needs 'bidders' and 'slots'")
        return self.scenario

    def require_templates(self) -> TemplateAuction:
        if self.auction is None:
            raise ConfigError(f"{self.name}: this command needs 'classes' and 'templates'")
        return self.auction


def _path(parts) -> str:
    out = ""
    for p in parts:
        out += f"[{p}]" if isinstance(p, int) else (f".{p}" if out else str(p))
    return out or "<root>"


def _build(fn, path: str, *args):
    try:
        return fn(*args)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def parse_distribution(spec: dict, path: str) -> ValueDistribution:
    kind = spec["kind"]
    for key in _REQUIRED[kind]:
        if key not in spec:
            raise ConfigError(f"{path}.{key}: required for a {kind} distribution")
    args = [spec[k] for k in _REQUIRED[kind]]
    return _build(getattr(ValueDistribution, kind), path, *args)


def scenario_from_dict(data: dict, source: str = "<dict>") -> ScenarioConfig:
    """Validate ``data`` and build the domain objects it describes."""
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        raise ConfigError(f"{source}: {_path(e.absolute_path)}: {e.message}")
    try:
        return _construct(data, source)
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from exc


def _construct(data: dict, source: str) -> ScenarioConfig:
    name = data.get("name", Path(source).stem)
    # template-only instances carry no value model, so welfare is the only usable default
    obj = data.get("objective", {} if "bidders" in data else {"alpha": 0.0, "beta": 1.0})
    weights = _build(lambda: ObjectiveWeights(obj.get("alpha", 1.0), obj.get("beta", 0.0),
                                              obj.get("gamma", 0.0)), "objective")
    scenario = None
    if "bidders" in data:
        models = []
        for k, b in enumerate(data["bidders"]):
            p = f"bidders[{k}]"
            value = parse_distribution(b["value"], f"{p}.value")
            w = b.get("weight", 1.0)
            weight = parse_distribution(w, f"{p}.weight") if isinstance(w, dict) else w
            models.append(_build(BidderModel, p, value, weight, b.get("correlation", 0.0),
                                 b.get("count", 1)))
        slots = data["slots"]
        scenario = _build(Scenario, "slots", models, slots, name)
    auction = None
    if "classes" in data:
        bidders = [_build(ClassedBidder, f"classes[{k}]", c["class"], c["value"], c.get("weight", 1.0))
                   for k, c in enumerate(data["classes"])]
        tpl = tuple({int(c): tuple(e) for c, e in t.items()} for t in data["templates"])
        templates = _build(TemplateSet, "templates", tpl)
        auction = _build(TemplateAuction, "classes", bidders, templates, weights)
    return ScenarioConfig(name, int(data.get("seed", 0)), scenario, weights, auction)


def load_scenario(path_or_name: str | Path) -> ScenarioConfig:
    """Load a scenario file, or one of the built-in presets by name."""
    key = str(path_or_name)
    if key in PRESETS:
        text = resources.files("adtradeoffs.harness").joinpath("presets").joinpath(f"{key}.json").read_text()
        source = key
    else:
        p = Path(key)
        if not p.is_file():
            raise ConfigError(f"no scenario file or preset named {key!r} (presets: {', '.join(PRESETS)})")
        text, source = p.read_text(), str(p)
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    return scenario_from_dict(data, source)
