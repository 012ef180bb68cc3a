"""Scenario configuration: JSON schema, parsing, lint rules and the bundled registry."""
from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import jsonschema

from .model import EffectMeasure, OutcomeModel, check_compatible, ConfigurationError
from .population import PopulationGrid, PopulationSpec, default_grid, grid_from_means
from .studies import STUDIES

MODES = ("truth_quadrature", "truth_monte_carlo", "estimated_model")
MECHANISMS = ("maic", "stc")
DEFAULT_INDEX_MEAN = 0.3

_number = {"type": "number"}
_arm_map = {
    "type": "object",
    "properties": {"B": _number, "C": _number},
    "additionalProperties": False,
}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "transportlab scenario",
    "type": "object",
    "required": ["name"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string", "pattern": "^[A-Za-z0-9_.-]+$"},
        "description": {"type": "string"},
        "kind": {"enum": ["transport", "classification", "two_point"]},
        "models": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["label"],
                "additionalProperties": False,
                "properties": {
                    "label": {"type": "string"},
                    "study": {"enum": sorted(STUDIES)},
                    "sema": {"type": "boolean"},
                    "link": {"enum": ["identity", "logit", "log", "log_hazard_weibull"]},
                    "beta0": _number,
                    "beta1": _number,
                    "beta2": _arm_map,
                    "gamma": _arm_map,
                    "shape": {"type": "number", "exclusiveMinimum": 0},
                    "sigma": {"type": "number", "exclusiveMinimum": 0},
                },
                "oneOf": [
                    {"required": ["study"], "not": {"required": ["link"]}},
                    {"required": ["link", "beta0", "beta1"], "not": {"required": ["study"]}},
                ],
            },
        },
        "grid": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "start": _number,
                "stop": _number,
                "step": {"type": "number", "exclusiveMinimum": 0},
                "means": {"type": "array", "items": _number, "minItems": 1},
                "range": {"type": "number", "exclusiveMinimum": 0},
                "comparator_index": {"type": "integer", "minimum": 0},
            },
        },
        "index_population": {
            "type": "object",
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["uniform", "tilted"]},
                "label": {"type": "string"},
                "mean": _number,
                "center": _number,
                "range": {"type": "number", "exclusiveMinimum": 0},
                "tilt": _number,
            },
            "additionalProperties": False,
        },
        "measures": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["kind", "estimand"],
                "additionalProperties": False,
                "properties": {
                    "kind": {"enum": ["mean_difference", "risk_difference", "log_odds_ratio",
                                      "log_risk_ratio", "conditional_log_hazard_ratio",
                                      "rmst_difference", "log_rmst_ratio"]},
                    "estimand": {"enum": ["conditional", "marginal"]},
                    "tau": {"type": "number", "exclusiveMinimum": 0},
                },
            },
        },
        "n_per_population": {"type": "integer", "minimum": 2},
        "base_seed": {"type": "integer", "minimum": 0, "maximum": 2 ** 64 - 1},
        "mode": {"enum": list(MODES)},
        "mechanism": {"enum": list(MECHANISMS)},
        "outputs": {"type": "string"},
        "n_nodes": {"type": "integer", "minimum": 2, "maximum": 512},
        "probe_points": {"type": "integer", "minimum": 2},
        "index_data": {"type": "string"},
    },
}


class ConfigError(ConfigurationError):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


@dataclass(frozen=True)
class ModelVariant:
    label: str
    model: OutcomeModel


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    description: str
    kind: str
    models: tuple
    grid: PopulationGrid
    index_population: PopulationSpec
    measures: tuple
    n_per_population: int
    base_seed: int
    mode: str
    mechanism: str
    outputs: str
    n_nodes: int
    probe_points: int
    index_data: str | None = None  # patient-level CSV of the index trial

    def with_overrides(self, **kw) -> "ScenarioConfig":
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d.update({k: v for k, v in kw.items() if v is not None})
        return ScenarioConfig(**d)

    def pairs(self):
        """(variant, measure) combinations whose scales are compatible."""
        for variant in self.models:
            for m in self.measures:
                try:
                    check_compatible(m.kind, variant.model.link)
                except ConfigurationError:
                    continue
                yield variant, m


def _model_from(entry: dict) -> OutcomeModel:
    if "study" in entry:
        return STUDIES[entry["study"]][0](entry.get("sema", True))
    return OutcomeModel.from_dict(entry)


def _grid_from(d: dict) -> PopulationGrid:
    rng = d.get("range", 2.0)
    if "means" in d:
        return grid_from_means(d["means"], rng, d.get("comparator_index"))
    g = default_grid(d.get("start", -0.5), d.get("stop", 0.5), d.get("step", 0.05), rng)
    if "comparator_index" in d:
        g = PopulationGrid(g.populations, d["comparator_index"])
    return g


def _schema_errors(raw) -> list[str]:
    validator = jsonschema.Draft202012Validator(SCHEMA)
    out = []
    for err in sorted(validator.iter_errors(raw), key=lambda e: list(e.absolute_path)):
        path = "/".join(str(p) for p in err.absolute_path) or "<root>"
        out.append(f"{path}: {err.message}")
    return out


def parse_config(raw: dict) -> ScenarioConfig:
    problems = _schema_errors(raw)
    if problems:
        raise ConfigError(problems)
    kind = raw.get("kind", "transport")
    if kind != "two_point":
        for key in ("models", "measures"):
            if key not in raw:
                problems.append(f"{key}: required for kind {kind!r}")
    try:
        models = tuple(ModelVariant(m["label"], _model_from(m)) for m in raw.get("models", []))
        measures = tuple(EffectMeasure.from_dict(m) for m in raw.get("measures", []))
        grid = _grid_from(raw.get("grid", {}))
        idx = raw.get("index_population", {"kind": "tilted", "mean": DEFAULT_INDEX_MEAN})
        idx = dict(idx, label=idx.get("label", "index"))
        index_pop = PopulationSpec.from_dict(idx)
    except (ValueError, KeyError) as exc:
        problems.append(f"<semantic>: {exc}")
    labels = [m["label"] for m in raw.get("models", [])]
    if len(set(labels)) != len(labels):
        problems.append("models: labels must be unique")
    if problems:
        raise ConfigError(problems)
    return ScenarioConfig(
        name=raw["name"],
        description=raw.get("description", ""),
        kind=kind,
        models=models,
        grid=grid,
        index_population=index_pop,
        measures=measures,
        n_per_population=raw.get("n_per_population", 100_000),
        base_seed=raw.get("base_seed", 20250101),
        mode=raw.get("mode", "truth_quadrature"),
        mechanism=raw.get("mechanism", "stc"),
        outputs=raw.get("outputs", f"out/{raw['name']}"),
        n_nodes=raw.get("n_nodes", 64),
        probe_points=raw.get("probe_points", 50),
        index_data=raw.get("index_data"),
    )


def lint(cfg: ScenarioConfig) -> list[str]:
    """Non-fatal deviations from the reference simulation setup."""
    warnings = []
    comp = cfg.grid.comparator
    if cfg.name.startswith("fig") and abs(comp.mu_x) > 1e-12:
        warnings.append(f"grid: comparator mean is {comp.mu_x}, reference setup centres it at 0")
    used = {m for _, m in cfg.pairs()}
    for m in cfg.measures:
        if m not in used:
            warnings.append(f"measures: {m.label} matches no model link and will be skipped")
    if cfg.kind == "transport" and cfg.mechanism == "maic":
        lo, hi = cfg.index_population.support
        for p in cfg.grid:
            if not lo < p.mu_x < hi:
                warnings.append(f"grid: {p.label} mean outside index support; MAIC weights will not exist")
    return warnings


def load_config(path) -> ScenarioConfig:
    text = Path(path).read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"<json>: {exc}"]) from exc
    if not isinstance(raw, dict):
        raise ConfigError(["<root>: scenario must be a JSON object"])
    cfg = parse_config(raw)
    if cfg.index_data and not Path(cfg.index_data).is_absolute():
        cfg = cfg.with_overrides(index_data=str(Path(path).parent / cfg.index_data))
    return cfg


def bundled_dir():
    return resources.files("transportlab") / "bundled"


def bundled_scenarios() -> dict:
    """name -> (path, description) of shipped scenario files."""
    out = {}
    for entry in sorted(bundled_dir().iterdir(), key=lambda p: p.name):
        if entry.name.endswith(".json"):
            raw = json.loads(entry.read_text())
            out[raw["name"]] = (entry, raw.get("description", ""))
    return out


def resolve(name_or_path: str):
    """A bundled scenario name or a filesystem path."""
    reg = bundled_scenarios()
    if name_or_path in reg:
        return reg[name_or_path][0]
    return Path(name_or_path)
