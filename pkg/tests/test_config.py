"""Strict config parsing and round-tripping."""

import pytest

from mfe_lab.config import (
    RunConfig,
    SolverSettings,
    apply_overrides,
    build_spec,
    config_payload,
    load_config,
    parse_config,
    rebuild_config,
    sweep_builder,
)
from mfe_lab.errors import ConfigError


def minimal(command="solve", model="capacity", **extra):
    data = {"command": command, "model": {"name": model}}
    data.update(extra)
    return data


def test_minimal_solve_config_parses():
    cfg = parse_config(minimal())
    assert cfg.command == "solve"
    assert cfg.model_name == "capacity"
    assert cfg.solver == SolverSettings()
    assert cfg.out == "."
    assert cfg.plots is True


def test_unknown_top_level_key_is_named():
    with pytest.raises(ConfigError, match="'tolerance'"):
        parse_config(minimal(tolerance=1e-7))


def test_unknown_model_parameter_is_named():
    data = minimal()
    data["model"]["gama"] = 0.1
    with pytest.raises(ConfigError, match="'gama'"):
        parse_config(data)


def test_unknown_solver_key_is_named():
    with pytest.raises(ConfigError, match="'tolerence'"):
        parse_config(minimal(solver={"tolerence": 1e-8}))


def test_missing_command_and_model():
    with pytest.raises(ConfigError, match="'command'"):
        parse_config({"model": {"name": "capacity"}})
    with pytest.raises(ConfigError, match="'model'"):
        parse_config({"command": "solve"})


def test_unknown_command_and_model_name():
    with pytest.raises(ConfigError, match="fit"):
        parse_config(minimal(command="fit"))
    with pytest.raises(ConfigError, match="widget"):
        parse_config(minimal(model="widget"))


def test_parameter_type_coercion():
    data = minimal()
    data["model"]["d"] = 2  # int where a float is expected: fine
    cfg = parse_config(data)
    assert cfg.model_params["d"] == 2.0
    assert isinstance(cfg.model_params["d"], float)

    data["model"]["d"] = "2"  # string is not
    with pytest.raises(ConfigError, match="must be a number"):
        parse_config(data)

    data = minimal()
    data["model"]["n_states"] = 50.5  # float where an int is expected
    with pytest.raises(ConfigError, match="must be an integer"):
        parse_config(data)


def test_tuple_parameters_coerce_from_arrays():
    data = minimal()
    data["model"]["shock_values"] = [0.7, 1.3]
    data["model"]["shock_probs"] = [0.5, 0.5]
    cfg = parse_config(data)
    assert cfg.model_params["shock_values"] == (0.7, 1.3)


def test_solver_table_validation():
    with pytest.raises(ConfigError, match="mode"):
        parse_config(minimal(solver={"mode": "newton"}))
    with pytest.raises(ConfigError, match="tol"):
        parse_config(minimal(solver={"tol": -1.0}))
    with pytest.raises(ConfigError, match="damping"):
        parse_config(minimal(solver={"damping": 1.5}))
    with pytest.raises(ConfigError, match="max_outer"):
        parse_config(minimal(solver={"max_outer": 0}))


def test_probe_starts_validation():
    cfg = parse_config(minimal(probe={"starts": ["uniform", "random", "random"]}))
    assert cfg.probe_starts == ("uniform", "random", "random")
    with pytest.raises(ConfigError, match="median"):
        parse_config(minimal(probe={"starts": ["median"]}))


def test_sweep_requires_its_table_and_fields():
    with pytest.raises(ConfigError, match="'sweep'"):
        parse_config(minimal(command="sweep"))
    sweep = {"parameter": "d", "values": [0.5, 1.0, 2.0], "expected_direction": "decreasing"}
    cfg = parse_config(minimal(command="sweep", sweep=sweep))
    assert cfg.sweep["values"] == (0.5, 1.0, 2.0)

    bad = dict(sweep, parameter="dd")
    with pytest.raises(ConfigError, match="'dd'"):
        parse_config(minimal(command="sweep", sweep=bad))
    bad = dict(sweep, values=[1.0])
    with pytest.raises(ConfigError, match="two points"):
        parse_config(minimal(command="sweep", sweep=bad))
    bad = dict(sweep, values=[2.0, 1.0])
    with pytest.raises(ConfigError, match="increasing"):
        parse_config(minimal(command="sweep", sweep=bad))
    bad = dict(sweep, expected_direction="flat")
    with pytest.raises(ConfigError, match="expected_direction"):
        parse_config(minimal(command="sweep", sweep=bad))


def test_typed_model_config():
    data = {
        "command": "solve",
        "model": {"name": "custom-typed"},
        "typed": {
            "base": "capacity",
            "masses": [0.5, 0.5],
            "members": [{"d": 0.85}, {"d": 1.15}],
        },
    }
    cfg = parse_config(data)
    assert cfg.typed["base"] == "capacity"
    assert cfg.typed["members"][1] == {"d": 1.15}
    spec = build_spec(cfg)
    assert spec.state_grid.ndim == 2
    assert spec.invariant_blocks is not None


def test_typed_table_is_rejected_for_plain_models():
    data = minimal()
    data["typed"] = {"base": "capacity", "masses": [1.0], "members": [{}]}
    with pytest.raises(ConfigError, match="custom-typed"):
        parse_config(data)


def test_typed_model_rejects_extra_model_keys():
    data = {
        "command": "solve",
        "model": {"name": "custom-typed", "d": 1.0},
        "typed": {"base": "capacity", "masses": [1.0], "members": [{}]},
    }
    with pytest.raises(ConfigError, match="only 'name'"):
        parse_config(data)


def test_build_spec_applies_overrides():
    data = minimal()
    data["model"]["d"] = 2.0
    spec = build_spec(parse_config(data))
    assert spec.params["d"] == 2.0


def test_sweep_builder_varies_one_parameter():
    sweep = {"parameter": "d", "values": [0.5, 1.0], "expected_direction": "decreasing"}
    cfg = parse_config(minimal(command="sweep", sweep=sweep))
    build = sweep_builder(cfg)
    assert build(0.5).params["d"] == 0.5
    assert build(2.0).params["d"] == 2.0


def test_apply_overrides_replaces_only_named_fields():
    cfg = parse_config(minimal())
    out = apply_overrides(cfg, seed=9, tol=1e-6)
    assert out.seed == 9
    assert out.solver.tol == 1e-6
    assert out.solver.damping == cfg.solver.damping
    assert cfg.seed == 0  # original untouched


def test_payload_round_trip():
    data = minimal(
        command="sweep",
        seed=3,
        jobs=2,
        out="somewhere",
        sweep={"parameter": "d", "values": [0.5, 1.0], "expected_direction": "decreasing"},
        solver={"tol": 1e-6, "mode": "phi"},
    )
    data["model"]["gamma"] = 0.05
    cfg = parse_config(data)
    back = rebuild_config(config_payload(cfg))
    assert back == cfg


def test_typed_payload_round_trip():
    data = {
        "command": "solve",
        "model": {"name": "custom-typed"},
        "typed": {
            "base": "capacity",
            "masses": [0.3, 0.7],
            "members": [{"d": 0.9}, {"d": 1.1}],
        },
    }
    cfg = parse_config(data)
    assert rebuild_config(config_payload(cfg)) == cfg


def test_load_config_reports_bad_toml(tmp_path):
    p = tmp_path / "broken.toml"
    p.write_text("command = 'solve'\n[model\nname='capacity'\n")
    with pytest.raises(ConfigError):
        load_config(str(p))


def test_load_config_reads_a_valid_file(tmp_path):
    p = tmp_path / "run.toml"
    p.write_text('command = "solve"\n\n[model]\nname = "quality_ladder"\nc_tilde = 2.0\n')
    cfg = load_config(str(p))
    assert cfg.model_name == "quality_ladder"
    assert cfg.model_params["c_tilde"] == 2.0


def test_run_config_is_immutable():
    cfg = parse_config(minimal())
    with pytest.raises(AttributeError):
        cfg.seed = 5
    assert isinstance(cfg, RunConfig)
