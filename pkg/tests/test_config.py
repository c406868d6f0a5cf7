import json

import numpy as np
import pytest

from spectramech.config import (
    SolverSettings,
    canonical_digest,
    load_config,
    parse_config,
)
from spectramech.errors import ConfigError, ValidationError
from spectramech.fd import FdScenario
from spectramech.results import RunResult, rows_to_csv
from spectramech.ss import SsScenario


def fd_doc():
    return {
        "schema": "spectramech/1",
        "model": "fd",
        "seed": 7,
        "bandwidth": 1.0,
        "noise_density": 1.0,
        "users": [
            {
                "power": 1.0,
                "gain": {"kind": "deterministic", "value": 1.0},
                "types": {"kind": "uniform", "lo": 0.0, "hi": 1.0},
            },
            {
                "power": 2.0,
                "gain": {
                    "kind": "discrete",
                    "values": [0.5, 1.5],
                    "probabilities": [0.5, 0.5],
                },
                "types": {"kind": "power", "lo": 1.0, "hi": 2.0, "exponent": -2.0},
            },
        ],
        "solver": {"tax_grid": 32, "mc_samples": 64},
    }


def ss_doc():
    return {
        "schema": "spectramech/1",
        "model": "ss",
        "seed": 3,
        "bandwidth": 1.0,
        "noise_density": 0.5,
        "total_power": 2.0,
        "gain_matrix": [[1.0, 0.2], [0.3, 0.8]],
        "users": [
            {"types": {"kind": "uniform", "lo": 0.0, "hi": 1.0}},
            {"types": {"kind": "linear", "lo": 0.0, "hi": 1.0, "ratio": 2.0}},
        ],
    }


class TestParsing:
    def test_fd_document_builds_scenario(self):
        scenario, settings = parse_config(fd_doc())
        assert isinstance(scenario, FdScenario)
        assert scenario.n_users == 2
        assert scenario.bandwidth == 1.0
        assert settings.seed == 7
        assert settings.tax_grid == 32
        assert settings.mc_samples == 64
        # untouched knobs keep their defaults
        assert settings.restarts == SolverSettings().restarts

    def test_ss_document_builds_scenario(self):
        scenario, settings = parse_config(ss_doc())
        assert isinstance(scenario, SsScenario)
        assert scenario.total_power == 2.0
        np.testing.assert_array_equal(
            scenario.physical.gain_matrix, [[1.0, 0.2], [0.3, 0.8]]
        )

    def test_defaults(self):
        s = SolverSettings()
        assert (s.seed, s.tax_grid, s.mc_samples, s.restarts) == (0, 64, 4096, 16)
        assert (s.regularity_grid, s.quadrature_order) == (1024, 64)

    def test_continuous_gain_accepted(self):
        doc = fd_doc()
        doc["users"][0]["gain"] = {
            "kind": "continuous",
            "lo": 0.5,
            "hi": 2.0,
            "density": {"family": "uniform"},
        }
        scenario, _ = parse_config(doc)
        assert scenario.users[0].physical.gain.kind == "continuous"

    def test_tabulated_types_accepted(self):
        doc = fd_doc()
        doc["users"][0]["types"] = {
            "kind": "tabulated",
            "thetas": [0.0, 0.4, 1.0],
            "cdf": [0.0, 0.3, 1.0],
        }
        scenario, _ = parse_config(doc)
        assert scenario.type_dists[0].kind == "tabulated"


class TestRejection:
    def test_unknown_top_key(self):
        doc = fd_doc()
        doc["extra"] = 1
        with pytest.raises(ValidationError) as err:
            parse_config(doc)
        assert any("$.extra" in f or "extra" in f for f in err.value.failures)

    def test_wrong_schema_tag(self):
        doc = fd_doc()
        doc["schema"] = "spectramech/9"
        with pytest.raises(ValidationError):
            parse_config(doc)

    def test_missing_model(self):
        doc = fd_doc()
        del doc["model"]
        with pytest.raises(ValidationError):
            parse_config(doc)

    def test_bool_is_not_a_number(self):
        doc = fd_doc()
        doc["bandwidth"] = True
        with pytest.raises(ValidationError):
            parse_config(doc)

    def test_failure_paths_name_the_field(self):
        doc = fd_doc()
        doc["users"][1]["gain"]["probabilities"] = "half each"
        with pytest.raises(ValidationError) as err:
            parse_config(doc)
        assert any("users[1].gain" in f for f in err.value.failures)

    def test_bad_probability_mass_reported(self):
        doc = fd_doc()
        doc["users"][1]["gain"]["probabilities"] = [0.6, 0.6]
        with pytest.raises(ValidationError) as err:
            parse_config(doc)
        assert any("probabilities sum" in f for f in err.value.failures)

    def test_ss_matrix_shape_enforced(self):
        doc = ss_doc()
        doc["gain_matrix"] = [[1.0, 0.2]]
        with pytest.raises(ValidationError):
            parse_config(doc)

    def test_ss_rejects_fd_only_keys(self):
        doc = ss_doc()
        doc["users"][0]["power"] = 1.0
        with pytest.raises(ValidationError):
            parse_config(doc)

    def test_multiple_failures_collected(self):
        doc = fd_doc()
        doc["bandwidth"] = -1.0
        doc["users"][0]["power"] = 0.0
        with pytest.raises(ValidationError) as err:
            parse_config(doc)
        assert len(err.value.failures) >= 2

    def test_nonregular_types_build_but_report(self):
        doc = fd_doc()
        doc["users"][0]["types"] = {
            "kind": "tabulated",
            "thetas": [0.0, 0.5, 1.0],
            "cdf": [0.0, 0.9, 1.0],
        }
        scenario, _ = parse_config(doc)
        rows = scenario.validation_report()
        assert any(
            r["check"] == "user0.types.regularity" and not r["passed"] for r in rows
        )


class TestFileLoading:
    def test_round_trip_from_disk(self, tmp_path):
        path = tmp_path / "scen.json"
        path.write_text(json.dumps(fd_doc()))
        scenario, settings = parse_config(load_config(str(path)))
        assert scenario.n_users == 2

    def test_missing_file(self):
        with pytest.raises(ConfigError):
            load_config("/nonexistent/picture.json")

    def test_malformed_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        with pytest.raises(ConfigError):
            load_config(str(path))

    def test_non_object_document(self, tmp_path):
        path = tmp_path / "arr.json"
        path.write_text("[1, 2]")
        with pytest.raises(ConfigError):
            load_config(str(path))


class TestDigest:
    def test_key_order_does_not_matter(self):
        a = {"b": 1, "a": [1, 2, {"x": 3.5}]}
        b = {"a": [1, 2, {"x": 3.5}], "b": 1}
        assert canonical_digest(a) == canonical_digest(b)

    def test_values_do_matter(self):
        assert canonical_digest({"a": 1}) != canonical_digest({"a": 2})

    def test_digest_is_hex_sha256(self):
        d = canonical_digest(fd_doc())
        assert len(d) == 64
        int(d, 16)


class TestResultsFormat:
    def test_json_bytes_stable_and_round_trip(self):
        res = RunResult(
            command="allocate", config_digest="ab" * 32, seed=5, payload={"x": [1.5]}
        )
        raw = res.to_json_bytes()
        assert raw == res.to_json_bytes()
        assert raw.endswith(b"\n")
        doc = json.loads(raw)
        assert list(doc) == sorted(doc)
        back = RunResult.from_json_bytes(raw)
        assert back == res

    def test_nan_refused(self):
        res = RunResult(
            command="allocate",
            config_digest="ab" * 32,
            seed=5,
            payload={"x": float("nan")},
        )
        with pytest.raises(ValueError):
            res.to_json_bytes()

    def test_foreign_document_refused(self):
        with pytest.raises(ConfigError):
            RunResult.from_json_bytes(b'{"schema": "other/1"}')
        with pytest.raises(ConfigError):
            RunResult.from_json_bytes(b"\xff\xfe not json")

    def test_csv_rendering(self):
        rows = [
            {"name": "a", "ok": True, "vals": [1.0, 2.5], "gap": None},
            {"name": "b", "ok": False, "vals": [3.0], "gap": 0.125},
        ]
        text = rows_to_csv(rows)
        lines = text.splitlines()
        assert lines[0] == "name,ok,vals,gap"
        assert lines[1] == "a,true,1.0 2.5,"
        assert lines[2] == "b,false,3.0,0.125"

    def test_csv_empty(self):
        assert rows_to_csv([]) == ""
