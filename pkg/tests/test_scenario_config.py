"""
Scenario documents: parsing, defaults and precondition checks.
"""

import json
from pathlib import Path

import pytest

from controller.scenario_config import ScenarioConfig, load_config, parse_config
from sfc_engine.processes import FvAnticipativeSpec, LocallyAcSpec
from utils.file_parser import ConfigParsingError

SCENARIO_DIR = Path(__file__).resolve().parent.parent / "scenarios"


def document(**overrides):
    base = {"name": "unit", "grid": {"L": 1.0, "n_steps": 256}}
    base.update(overrides)
    return json.dumps(base)


class TestParse:
    def test_defaults(self):
        config = parse_config(document())
        assert config.flavor == "ogawa_u"
        assert config.N_outer() == 256
        assert config.M_max() == 256
        assert config.outer_basis().family == "haar"
        assert config.differential().phi is None
        assert config.replication.count == 10

    def test_trigonometric_defaults_to_representable_count(self):
        config = parse_config(document(outer={"family": "trigonometric"}))
        assert config.N_outer() == 129

    def test_phi_flavor_carries_inner_basis(self):
        config = parse_config(document(flavor="ogawa_phi", inner={"family": "cosine", "M_max": 32}))
        diff = config.differential()
        assert diff.phi.family == "cosine"
        assert diff.phi_M == 32

    def test_nested_specs(self):
        config = parse_config(document(a_spec={
            "variant": "locally_ac",
            "a0": {"variant": "deterministic", "g": {"kind": "constant", "value": 1.0}},
            "derivative": {"variant": "fv_anticipative", "g": {"kind": "ramp"}, "functional": {"name": "B"}},
        }))
        assert isinstance(config.a_spec, LocallyAcSpec)
        assert isinstance(config.a_spec.derivative, FvAnticipativeSpec)

    def test_workers(self):
        assert parse_config(document(replication={"parallelism": 3})).workers() == 3

    @pytest.mark.parametrize("path", sorted(SCENARIO_DIR.glob("*.json")), ids=lambda p: p.stem)
    def test_shipped_scenarios_parse(self, path):
        assert isinstance(load_config(path), ScenarioConfig)


class TestPreconditions:
    def _errors(self, text):
        with pytest.raises(ConfigParsingError) as info:
            parse_config(text)
        return "\n".join(info.value.errors)

    def test_malformed_json(self):
        with pytest.raises(ConfigParsingError, match="malformed JSON at line 1"):
            parse_config('{"name": }')

    def test_document_must_be_object(self):
        with pytest.raises(ConfigParsingError, match="JSON object"):
            parse_config("[1, 2]")

    def test_grid(self):
        assert "grid" in self._errors(document(grid={"n_steps": 100}))

    def test_basis_finer_than_grid(self):
        assert "basis finer than grid" in self._errors(document(outer={"N_outer": 512}))

    def test_mask_must_be_nonempty(self):
        errors = self._errors(document(outer={"N_outer": 2, "excluded": [1, 2]}))
        assert "mask must be cofinite and nonempty" in errors

    def test_excluded_out_of_range(self):
        assert "outer.excluded" in self._errors(document(outer={"N_outer": 4, "excluded": [5]}))

    def test_off_grid_functional_time(self):
        spec = {"variant": "fv_anticipative", "g": {"kind": "ramp"}, "functional": {"name": "B", "time": 0.3}}
        assert "off-grid time" in self._errors(document(a_spec=spec))

    def test_flavor_mismatch(self):
        spec = {"variant": "fv_anticipative", "g": {"kind": "ramp"}, "functional": {"name": "abs_B"}}
        errors = self._errors(document(a_spec=spec, flavor="skorokhod"))
        assert "flavor/a_spec" in errors

    def test_oracle_family_member(self):
        f = {"variant": "fv_anticipative", "g": {"kind": "ramp"}, "functional": {"name": "abs_B"}}
        errors = self._errors(document(oracle={"specs": {"bad": {"variant": "s_type_ito", "f": f}}}))
        assert "oracle.specs.bad" in errors
        assert "no closed-form derivative" in errors

    def test_h_min_below_grid_step(self):
        assert "lil.h_min" in self._errors(document(lil={"h_min": 2.0 ** -10}))

    def test_unknown_key(self):
        assert "colour" in self._errors(document(colour="red"))

    def test_unknown_variant(self):
        assert "a_spec" in self._errors(document(a_spec={"variant": "fractional", "hurst": 0.3}))

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigParsingError, match="not found"):
            load_config(tmp_path / "absent.json")

    def test_wrong_suffix(self, tmp_path):
        path = tmp_path / "scenario.yaml"
        path.write_text("name: x")
        with pytest.raises(ConfigParsingError, match="Unsupported config format"):
            load_config(path)
