import json

import jsonschema
import pytest

from gradesim.config import SCHEMA, ParseError, ValidationError, config_from_dict, parse_config, write_schema
from gradesim.readers import DEFAULT_HUMAN_ERROR_RATE, AIKind
from gradesim.scoring import Percentile, PoolingPolicy, Threshold
from gradesim.workflow import FrameworkKind, MissingAIPolicy


def write(tmp_path, doc, name="cfg.json"):
    path = tmp_path / name
    path.write_text(doc if isinstance(doc, str) else json.dumps(doc))
    return path


def test_minimal_config_gets_defaults(tmp_path):
    cfg = parse_config(write(tmp_path, {"seed": 3, "population": "measure1-like", "frameworks": ["HDR"]}))
    assert cfg.seed == 3 and cfg.frameworks == (FrameworkKind.HDR,)
    assert cfg.population.n_patients == 361 and cfg.population_name == "measure1-like"
    assert cfg.disagreement == Threshold(0) and cfg.pooling is PoolingPolicy.MEAN_ALL
    assert cfg.ai.kind is AIKind.TRAINED and cfg.ai.missing_prob == 0.22
    assert all(h.error_rate == DEFAULT_HUMAN_ERROR_RATE for h in cfg.humans)
    assert cfg.replications == 1 and cfg.r_grid == (1.0, 2.0, 3.0, 4.0, 5.0)
    assert cfg.ir_missing is MissingAIPolicy.ARBITRATE


def test_negative_seed_is_invalid():
    with pytest.raises(ValidationError) as err:
        config_from_dict({"seed": -1})
    assert "seed" in str(err.value)


def test_seed_is_mandatory():
    with pytest.raises(ValidationError):
        config_from_dict({"population": "prevent-like"})


def test_unknown_key_is_named():
    with pytest.raises(ParseError, match="framwork"):
        config_from_dict({"seed": 1, "framwork": ["HDR"]})
    with pytest.raises(ParseError, match="ai.kindd"):
        config_from_dict({"seed": 1, "ai": {"kindd": "random"}})


def test_malformed_json_reports_line(tmp_path):
    with pytest.raises(ParseError, match=r":2:"):
        parse_config(write(tmp_path, '{"seed": 1,\n "x" 2}'))
    with pytest.raises(ParseError):
        parse_config(tmp_path / "missing.json")


def test_full_config(tmp_path):
    doc = {
        "seed": 9, "population": "prevent-like", "n_patients": 40, "frameworks": ["AI_SR", "HDR"],
        "ai": {"kind": "trained", "recalls": [0.9, 0.5, 0.5, 0.9], "missing_prob": 0.1},
        "humans": [{"error_rate": 0.01}, {"error_rate": 0.02}, {"error_rate": 0.0}],
        "disagreement": {"mode": "percentile", "q": 0.1}, "pooling": "arbitrator_overrides",
        "ir_missing": "second_human", "costs": {"c_ai": 0.2, "r_grid": [1, 3]}, "replications": 2,
        "progression_threshold": 1, "histogram_bin_width": 2, "alpha": 0.01, "output_dir": "x",
    }
    cfg = config_from_dict(doc)
    assert cfg.population.n_patients == 40
    assert cfg.disagreement == Percentile(0.1) and cfg.ai.missing_prob == 0.1
    assert [h.error_rate for h in cfg.humans] == [0.01, 0.02, 0.0]
    assert cfg.costs.c_ai == 0.2 and cfg.r_grid == (1.0, 3.0)
    assert cfg.workflow_config("HDR").ai is None
    assert cfg.workflow_config("AI_SR").ai == cfg.ai


def test_random_ai_defaults_to_no_missingness():
    assert config_from_dict({"seed": 1, "ai": {"kind": "random"}}).ai.missing_prob == 0.0


def test_inline_population():
    spec = {"n_patients": 10, "healthy_fraction": 0.2, "progression_control": {"p_progress": 0.3}}
    cfg = config_from_dict({"seed": 1, "population": spec})
    assert cfg.population.n_patients == 10 and cfg.population.progression_control.p_progress == 0.3
    assert cfg.population_name is None


def test_semantic_errors_are_validation_errors():
    with pytest.raises(ValidationError):
        config_from_dict({"seed": 1, "ai": {"recalls": [0.5] * 4, "confusion": [[0.25] * 4] * 4}})
    with pytest.raises(ValidationError):
        config_from_dict({"seed": 1, "population": {"healthy_fraction": 0.99}})


def test_digest_tracks_content_only():
    a = config_from_dict({"seed": 1})
    assert a.digest() == config_from_dict({"seed": 1, "output_dir": "elsewhere"}).digest()
    assert a.digest() == config_from_dict({"seed": 1, "pooling": "mean_all"}).digest()
    assert a.digest() != config_from_dict({"seed": 2}).digest()
    assert a.digest() != config_from_dict({"seed": 1, "replications": 2}).digest()
    assert a.with_overrides(seed=2).digest() == config_from_dict({"seed": 2}).digest()


def test_schema_is_valid_and_writable(tmp_path):
    jsonschema.Draft202012Validator.check_schema(SCHEMA)
    write_schema(tmp_path / "schema.json")
    assert json.loads((tmp_path / "schema.json").read_text()) == SCHEMA
