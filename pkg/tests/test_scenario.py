import numpy as np
import pytest

from coagfrag.errors import ConfigError
from coagfrag.scenario import build_scenario, load_scenario


def minimal(**over):
    raw = {
        "weight": {"kind": "power", "p": 1.0},
        "frag": {"family": "becker_doring"},
        "coag": {"family": "constant", "scale": 1.0},
        "truncation": {"N": 16},
        "solver": {"T": 0.5},
    }
    raw.update(over)
    return raw


class TestDefaults:
    def test_minimal_document_builds(self):
        sc = build_scenario(minimal())
        assert sc.seed == 20260814
        assert sc.alpha == 0.0
        assert sc.N == 16
        assert sc.engine == "picard"
        assert sc.T == 0.5
        assert sc.mode.value == "conservative_drop"
        assert sc.output_format == "csv"
        assert sc.stride == 0
        assert sc.audits == []

    def test_empty_document_builds(self):
        sc = build_scenario({})
        assert sc.N == 128
        assert sc.kernel.scale == 0.0  # no coagulation by default
        assert sc.model.name == "none"

    def test_initial_state_default_is_monomer(self):
        u0 = build_scenario(minimal()).initial_state()
        assert u0.u[0] == 1.0
        assert u0.u[1:].sum() == 0.0

    def test_output_times_default_grid(self):
        sc = build_scenario(minimal(output={"points": 4}))
        assert sc.output_times() == [0.125, 0.25, 0.375, 0.5]


class TestValidation:
    def test_unknown_top_level_key(self):
        with pytest.raises(ConfigError, match="unknown"):
            build_scenario(minimal(solvr={"T": 1.0}))

    def test_unknown_nested_key(self):
        with pytest.raises(ConfigError, match="unknown"):
            build_scenario(minimal(solver={"T": 0.5, "tol": 1e-3}))

    def test_alpha_range(self):
        with pytest.raises(ConfigError):
            build_scenario(minimal(alpha=1.0))
        sc = build_scenario(minimal(alpha=0.25))
        assert sc.alpha == 0.25

    def test_negative_seed(self):
        with pytest.raises(ConfigError):
            build_scenario(minimal(seed=-1))

    def test_bad_engine(self):
        with pytest.raises(ConfigError):
            build_scenario(minimal(solver={"T": 0.5, "engine": "exact"}))

    def test_bad_output_format(self):
        with pytest.raises(ConfigError):
            build_scenario(minimal(output={"format": "xml"}))

    def test_output_times_beyond_horizon(self):
        with pytest.raises(ConfigError):
            build_scenario(minimal(output={"times": [0.4, 0.9]}))

    def test_sizes_amounts_length_mismatch(self):
        with pytest.raises(ConfigError):
            build_scenario(minimal(initial={"sizes": [1, 2],
                                            "amounts": [1.0]}))

    def test_unknown_audit_kind(self):
        with pytest.raises(ConfigError, match="unknown audit"):
            build_scenario(minimal(audits=[{"kind": "entropy"}]))

    def test_known_audits_pass_through_params(self):
        sc = build_scenario(minimal(
            audits=[{"kind": "mass-ledger", "tol": 1e-9}]))
        assert sc.audits == [{"kind": "mass-ledger", "tol": 1e-9}]

    def test_sweep_sizes_must_increase(self):
        with pytest.raises(ConfigError):
            build_scenario(minimal(sweep={"sizes": [32, 16]}))

    def test_cosine_amplitude_bound(self):
        with pytest.raises(ConfigError, match="amplitude"):
            build_scenario(minimal(coag={
                "family": "constant", "scale": 1.0,
                "profile": {"name": "cosine", "amplitude": 1.5}}))


class TestBuilders:
    def test_geometric_weight(self):
        sc = build_scenario(minimal(weight={"kind": "geometric", "r": 3.0}))
        assert np.array_equal(sc.weight.values(2), [3.0, 9.0])

    def test_weight_requires_ratio(self):
        with pytest.raises(ConfigError, match="missing"):
            build_scenario(minimal(weight={"kind": "geometric"}))

    def test_tabulated_model_roundtrip(self):
        sc = build_scenario(minimal(frag={
            "family": "tabulated",
            "rates": [0.0, 2.0, 3.0],
            "rows": {"2": [[1, 2.0]], "3": [[1, 1.0], [2, 1.0]]}}))
        assert np.array_equal(sc.model.rates(3), [0.0, 2.0, 3.0])

    def test_table_kernel_values(self):
        sc = build_scenario(minimal(coag={
            "family": "table", "values": [[1.0, 2.0], [2.0, 3.0]]}))
        K = sc.kernel.part_matrix(2)
        assert np.array_equal(K, [[1.0, 2.0], [2.0, 3.0]])

    def test_initial_values_vector(self):
        sc = build_scenario(minimal(initial={"values": [0.5, 0.0, 0.25]}))
        u0 = sc.initial_state()
        assert u0.u[0] == 0.5
        assert u0.u[2] == 0.25
        assert u0.N == 16

    def test_explicit_output_times_sorted_unique(self):
        sc = build_scenario(minimal(output={"times": [0.5, 0.1, 0.5]}))
        assert sc.output_times() == [0.1, 0.5]


class TestLoad:
    def test_load_toml_file(self, tmp_path):
        doc = """
seed = 7
[weight]
kind = "power"
p = 1.0
[frag]
family = "becker_doring"
[coag]
family = "constant"
scale = 2.0
[truncation]
N = 32
[solver]
T = 0.25
engine = "oracle"
"""
        path = tmp_path / "run.toml"
        path.write_text(doc)
        sc = load_scenario(str(path))
        assert sc.seed == 7
        assert sc.N == 32
        assert sc.engine == "oracle"
        assert sc.kernel.scale == 2.0

    def test_parse_error_becomes_config_error(self, tmp_path):
        path = tmp_path / "bad.toml"
        path.write_text("seed = [unclosed")
        with pytest.raises(ConfigError, match="TOML"):
            load_scenario(str(path))
