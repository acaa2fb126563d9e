"""Ad-cap and counterexample reports used by the command line."""
from __future__ import annotations

import json
from pathlib import Path

import jsonschema

from ..constrained import AdCapProblem, AdCapTerm, DiscreteBidder, solve_ad_cap
from ..errors import ConfigError
from ..objectives import BidderModel, EstimatorConfig
from ..templates import COUNTEREXAMPLES, Counterexample, counterexample
from ..valuations import ObjectiveWeights
from .config import _DIST, _path, parse_distribution

_NUM = {"type": "number"}
_WEIGHTS = {"type": "object", "properties": {"alpha": _NUM, "beta": _NUM, "gamma": _NUM},
            "additionalProperties": False}
ADCAP_SCHEMA = {
    "type": "object",
    "required": ["theta", "terms"],
    "properties": {
        "theta": _NUM,
        "objective": _WEIGHTS,
        "terms": {
            "type": "array", "minItems": 1,
            "items": {
                "type": "object",
                "required": ["q", "s", "bidders"],
                "properties": {
                    "q": _NUM, "s": _NUM, "objective": _WEIGHTS,
                    "bidders": {"type": "array", "minItems": 1, "items": {"oneOf": [
                        {"type": "object", "required": ["values", "probs"],
                         "properties": {"values": {"type": "array", "items": _NUM},
                                        "probs": {"type": "array", "items": _NUM},
                                        "weight": _NUM},
                         "additionalProperties": False},
                        {"type": "object", "required": ["value"],
                         "properties": {"value": _DIST, "weight": {"oneOf": [_NUM, _DIST]},
                                        "correlation": _NUM,
                                        "count": {"type": "integer", "minimum": 1}},
                         "additionalProperties": False},
                    ]}},
                },
                "additionalProperties": False,
            },
        },
    },
    "additionalProperties": False,
}


def _weights(d: dict | None, default: ObjectiveWeights, path: str) -> ObjectiveWeights:
    if d is None:
        return default
    try:
        return ObjectiveWeights(d.get("alpha", 0.0), d.get("beta", 0.0), d.get("gamma", 0.0))
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def adcap_from_dict(data: dict, source: str = "<dict>") -> AdCapProblem:
    errors = sorted(jsonschema.Draft202012Validator(ADCAP_SCHEMA).iter_errors(data),
                    key=lambda e: list(e.absolute_path))
    if errors:
        raise ConfigError(f"{source}: {_path(errors[0].absolute_path)}: {errors[0].message}")
    base = _weights(data.get("objective"), ObjectiveWeights(), "objective")
    terms = []
    for j, t in enumerate(data["terms"]):
        path = f"terms[{j}]"
        bidders = []
        for k, b in enumerate(t["bidders"]):
            bp = f"{path}.bidders[{k}]"
            try:
                if "values" in b:
                    bidders.append(DiscreteBidder(b["values"], b["probs"], b.get("weight", 1.0)))
                else:
                    w = b.get("weight", 1.0)
                    w = parse_distribution(w, f"{bp}.weight") if isinstance(w, dict) else w
                    bidders.append(BidderModel(parse_distribution(b["value"], f"{bp}.value"), w,
                                               b.get("correlation", 0.0), b.get("count", 1)))
            except ValueError as exc:
                raise ConfigError(f"{source}: {bp}: {exc}") from exc
        try:
            terms.append(AdCapTerm(t["q"], t["s"], bidders,
                                   _weights(t.get("objective"), base, f"{path}.objective")))
        except ValueError as exc:
            raise ConfigError(f"{source}: {path}: {exc}") from exc
    try:
        return AdCapProblem(terms, data["theta"])
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from exc


def load_adcap(path: str | Path) -> AdCapProblem:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"ad-cap file {str(p)!r} not found")
    try:
        data = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    return adcap_from_dict(data, str(p))


def run_adcap(problem: AdCapProblem, theta: float | None = None, tol: float = 1e-9,
              est: EstimatorConfig | None = None) -> dict:
    """Multiplier, per-term reserves, achieved impressions and objective."""
    if theta is not None:
        problem = AdCapProblem(problem.terms, theta)
    sol = solve_ad_cap(problem, tol, est)
    return {
        "theta": problem.theta,
        "lambda": sol.lam,
        "reserves": list(sol.reserves),
        "impressions": sol.impressions,
        "objective": sol.objective,
        "tie_probability": sol.tie_prob,
        "slackness": sol.slackness,
        "exact": sol.exact,
        "diagnostic": sol.diagnostic,
    }


def parse_params(items) -> dict:
    """``["m=10", "eps=1e-6"]`` to keyword arguments (ints stay ints)."""
    out = {}
    for item in items or ():
        if "=" not in item:
            raise ConfigError(f"parameter {item!r} must read name=value")
        k, v = item.split("=", 1)
        k = k.strip()
        try:
            out[k] = int(v) if v.strip().lstrip("-").isdigit() else float(v) if _is_float(v) else v.strip()
        except ValueError as exc:
            raise ConfigError(f"parameter {item!r}: {exc}") from exc
    return out


def _is_float(v: str) -> bool:
    try:
        float(v)
    except ValueError:
        return False
    return True


def run_counterexample(name: str, params: dict | None = None) -> Counterexample:
    if name not in COUNTEREXAMPLES:
        raise ConfigError(f"unknown counterexample {name!r}; choose from {', '.join(COUNTEREXAMPLES)}")
    try:
        return counterexample(name, **(params or {}))
    except TypeError as exc:
        raise ConfigError(f"{name}: {exc}") from exc
