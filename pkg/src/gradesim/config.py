"""Scenario configuration: a single JSON document validated against ``SCHEMA``."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema

from .cohort import PRESETS, PopulationSpec
from .economics import DEFAULT_R_GRID, CostParams
from .readers import (DEFAULT_HUMAN_ERROR_RATE, DEFAULT_MISSING_PROB, AIKind, AIModelSpec, HumanReaderParams,
                      ordinal_confusion)
from .scoring import Percentile, PoolingPolicy, Threshold
from .workflow import FrameworkKind, MissingAIPolicy, WorkflowConfig

_PROB = {"type": "number", "minimum": 0, "maximum": 1}
_POS = {"type": "number", "exclusiveMinimum": 0}
_NONNEG = {"type": "number", "minimum": 0}
_PROGRESSION = {
    "type": "object",
    "additionalProperties": False,
    "properties": {"p_progress": _PROB, "mean_jump": {"type": "number", "minimum": 1}, "dispersion": _POS},
}
_HUMAN = {"type": "object", "additionalProperties": False, "properties": {"error_rate": _PROB}}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "gradesim scenario",
    "type": "object",
    "additionalProperties": False,
    "required": ["seed"],
    "properties": {
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "population": {
            "oneOf": [
                {"type": "string", "enum": sorted(PRESETS)},
                {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "n_patients": {"type": "integer", "minimum": 0},
                        "allocation": {"type": "array", "items": {"type": "integer", "minimum": 0},
                                       "minItems": 2, "maxItems": 2},
                        "corner_marginal": {"type": "array", "items": _PROB, "minItems": 4, "maxItems": 4},
                        "healthy_fraction": _PROB,
                        "severity_concentration": _POS,
                        "progression_treatment": _PROGRESSION,
                        "progression_control": _PROGRESSION,
                    },
                },
            ]
        },
        "n_patients": {"type": "integer", "minimum": 1},
        "frameworks": {"type": "array", "items": {"enum": [f.value for f in FrameworkKind]}, "uniqueItems": True},
        "ai": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": [k.value for k in AIKind]},
                "recalls": {"type": "array", "items": _PROB, "minItems": 4, "maxItems": 4},
                "confusion": {"type": "array", "minItems": 4, "maxItems": 4,
                              "items": {"type": "array", "items": _PROB, "minItems": 4, "maxItems": 4}},
                "missing_prob": _PROB,
            },
        },
        "humans": {"oneOf": [_HUMAN, {"type": "array", "items": _HUMAN, "minItems": 3, "maxItems": 3}]},
        "disagreement": {
            "oneOf": [
                {"type": "object", "additionalProperties": False, "required": ["mode"],
                 "properties": {"mode": {"const": "threshold"}, "delta": {"type": "integer", "minimum": 0}}},
                {"type": "object", "additionalProperties": False, "required": ["mode"],
                 "properties": {"mode": {"const": "percentile"},
                                "q": {"type": "number", "exclusiveMinimum": 0, "maximum": 1}}},
            ]
        },
        "pooling": {"enum": [p.value for p in PoolingPolicy]},
        "ir_missing": {"enum": [p.value for p in MissingAIPolicy]},
        "costs": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"c_first": _NONNEG, "c_second": _NONNEG, "c_ai": _NONNEG, "arbitration_ratio": _POS,
                           "r_grid": {"type": "array", "items": _POS, "minItems": 1}},
        },
        "replications": {"type": "integer", "minimum": 1},
        "progression_threshold": {"type": "number"},
        "histogram_bin_width": _POS,
        "alpha": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "output_dir": {"type": "string"},
    },
}


class ConfigError(ValueError):
    pass


class ParseError(ConfigError):
    pass


class ValidationError(ConfigError):
    def __init__(self, problems: list[str]):
        self.problems = problems
        super().__init__("invalid scenario config:\n  " + "\n  ".join(problems))


@dataclass(frozen=True)
class ScenarioConfig:
    seed: int
    population: PopulationSpec
    population_name: str | None
    frameworks: tuple[FrameworkKind, ...]
    ai: AIModelSpec
    humans: tuple[HumanReaderParams, ...]
    disagreement: Threshold | Percentile
    pooling: PoolingPolicy
    ir_missing: MissingAIPolicy
    costs: CostParams
    r_grid: tuple[float, ...]
    replications: int = 1
    progression_threshold: float = 2.0
    histogram_bin_width: float = 1.0
    alpha: float = 0.05
    output_dir: str = "out"
    document: dict = field(default_factory=dict, compare=False, repr=False)

    def workflow_config(self, framework) -> WorkflowConfig:
        framework = FrameworkKind(framework)
        return WorkflowConfig(framework, self.disagreement, self.pooling,
                              None if framework is FrameworkKind.HDR else self.ai, self.humans, self.ir_missing)

    def digest(self) -> str:
        """Content hash of the resolved config; the output directory is not content."""
        doc = {k: v for k, v in self.document.items() if k != "output_dir"}
        blob = json.dumps(doc, sort_keys=True, separators=(",", ":"))
        return "sha256:" + hashlib.sha256(blob.encode("utf-8")).hexdigest()

    def with_overrides(self, seed: int | None = None, output_dir: str | None = None) -> ScenarioConfig:
        doc = dict(self.document)
        if seed is not None:
            doc["seed"] = seed
        if output_dir is not None:
            doc["output_dir"] = output_dir
        return config_from_dict(doc)


def _resolve(doc: dict) -> dict:
    """Apply defaults; the returned document fully determines a run."""
    out = dict(doc)
    pop = out.get("population", "measure1-like")
    if isinstance(pop, str):
        spec = PRESETS[pop]
    else:
        spec = PopulationSpec.from_dict(pop)
    if "n_patients" in out:
        spec = spec.with_size(out["n_patients"])
    out["population"] = pop if isinstance(pop, str) else spec.to_dict()
    out["n_patients"] = spec.n_patients
    out.setdefault("frameworks", [f.value for f in FrameworkKind])

    ai = dict(out.get("ai", {}))
    ai.setdefault("kind", AIKind.TRAINED.value)
    ai.setdefault("missing_prob", DEFAULT_MISSING_PROB if ai["kind"] == AIKind.TRAINED.value else 0.0)
    out["ai"] = ai

    humans = out.get("humans", {"error_rate": DEFAULT_HUMAN_ERROR_RATE})
    humans = [humans] * 3 if isinstance(humans, dict) else list(humans)
    out["humans"] = [{"error_rate": h.get("error_rate", DEFAULT_HUMAN_ERROR_RATE)} for h in humans]

    rule = dict(out.get("disagreement", {"mode": "threshold"}))
    if rule["mode"] == "threshold":
        rule.setdefault("delta", 0)
    else:
        rule.setdefault("q", 0.05)
    out["disagreement"] = rule
    out.setdefault("pooling", PoolingPolicy.MEAN_ALL.value)
    out.setdefault("ir_missing", MissingAIPolicy.ARBITRATE.value)
    costs = dict(out.get("costs", {}))
    for key, default in (("c_first", 1.0), ("c_second", 1.0), ("c_ai", 0.0), ("arbitration_ratio", 1.0)):
        costs.setdefault(key, default)
    costs.setdefault("r_grid", list(DEFAULT_R_GRID))
    out["costs"] = costs
    out.setdefault("replications", 1)
    out.setdefault("progression_threshold", 2.0)
    out.setdefault("histogram_bin_width", 1.0)
    out.setdefault("alpha", 0.05)
    out.setdefault("output_dir", "out")
    return out


def _schema_errors(doc) -> list[jsonschema.ValidationError]:
    return sorted(jsonschema.Draft202012Validator(SCHEMA).iter_errors(doc), key=lambda e: list(e.path))


def _unknown_keys(err: jsonschema.ValidationError) -> list[str]:
    found = []
    for e in [err, *(err.context or [])]:
        if e.validator == "additionalProperties":
            allowed = set(e.schema.get("properties", {}))
            where = ".".join(str(p) for p in e.absolute_path)
            found += [f"{where}.{k}" if where else k for k in e.instance if k not in allowed]
    return found


def config_from_dict(doc: dict) -> ScenarioConfig:
    if not isinstance(doc, dict):
        raise ParseError("scenario config must be a JSON object")
    errors = _schema_errors(doc)
    unknown = sorted({k for e in errors for k in _unknown_keys(e)})
    if unknown:
        raise ParseError(f"unknown config key(s): {', '.join(unknown)}")
    if errors:
        raise ValidationError([f"{'.'.join(map(str, e.absolute_path)) or '<root>'}: {e.message}" for e in errors])

    try:
        doc = _resolve(doc)
        ai_doc = doc["ai"]
        kind = AIKind(ai_doc["kind"])
        confusion = ai_doc.get("confusion")
        if "recalls" in ai_doc:
            if confusion is not None:
                raise ValueError("ai: give either recalls or confusion, not both")
            confusion = ordinal_confusion(ai_doc["recalls"])
        ai = AIModelSpec(kind, confusion, ai_doc["missing_prob"])
        rule_doc = doc["disagreement"]
        rule = Threshold(rule_doc["delta"]) if rule_doc["mode"] == "threshold" else Percentile(rule_doc["q"])
        costs_doc = doc["costs"]
        pop = doc["population"]
        population = PRESETS[pop].with_size(doc["n_patients"]) if isinstance(pop, str) else PopulationSpec.from_dict(pop)
        return ScenarioConfig(
            seed=doc["seed"],
            population=population,
            population_name=pop if isinstance(pop, str) else None,
            frameworks=tuple(FrameworkKind(f) for f in doc["frameworks"]),
            ai=ai,
            humans=tuple(HumanReaderParams(h["error_rate"]) for h in doc["humans"]),
            disagreement=rule,
            pooling=PoolingPolicy(doc["pooling"]),
            ir_missing=MissingAIPolicy(doc["ir_missing"]),
            costs=CostParams(costs_doc["c_first"], costs_doc["c_second"], costs_doc["arbitration_ratio"],
                             costs_doc["c_ai"]),
            r_grid=tuple(float(r) for r in costs_doc["r_grid"]),
            replications=doc["replications"],
            progression_threshold=float(doc["progression_threshold"]),
            histogram_bin_width=float(doc["histogram_bin_width"]),
            alpha=float(doc["alpha"]),
            output_dir=doc["output_dir"],
            document=doc,
        )
    except (ValueError, KeyError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ValidationError([str(exc)]) from exc


def parse_config(path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read config {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    return config_from_dict(doc)


def write_schema(path) -> None:
    Path(path).write_text(json.dumps(SCHEMA, indent=2) + "\n", encoding="utf-8")
