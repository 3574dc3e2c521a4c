"""TOML run configuration with a closed schema.

Every table has a fixed key set and unknown keys are rejected rather than
ignored, so a typo in a batch config fails loudly before any computation
starts.  Model parameter keys are checked against the chosen family's
parameter dataclass, which keeps this module free of per-model knowledge.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

try:
    import tomllib
except ModuleNotFoundError:  # 3.10
    import tomli as tomllib

from .errors import ConfigError
from .model import ModelSpec, TypedModelFamily
from .models import MODEL_BUILDERS

COMMANDS = ("solve", "probe", "sweep", "simulate", "check")
START_KINDS = ("dirac_lo", "dirac_hi", "uniform", "random")
TYPED_NAME = "custom-typed"

_TOP_KEYS = {"command", "out", "seed", "jobs", "plots",
             "model", "typed", "solver", "probe", "sweep", "simulate"}
_SOLVER_KEYS = {"tol", "damping", "max_outer", "mode"}
_TYPED_KEYS = {"base", "masses", "members"}
_PROBE_KEYS = {"starts"}
_SWEEP_KEYS = {"parameter", "values", "expected_direction"}
_SIM_KEYS = {"agents", "horizon", "burn_in", "cadence", "state_mode", "sample_agents"}


@dataclass(frozen=True)
class SolverSettings:
    tol: float = 1e-7
    damping: float = 0.5
    max_outer: int = 500
    mode: str = "mu_s"


@dataclass(frozen=True)
class RunConfig:
    command: str
    model_name: str
    model_params: dict = field(default_factory=dict)
    typed: dict | None = None
    solver: SolverSettings = SolverSettings()
    probe_starts: tuple = ("dirac_lo", "dirac_hi", "uniform")
    sweep: dict | None = None
    simulate: dict | None = None
    out: str = "."
    seed: int = 0
    jobs: int = 1
    plots: bool = True


def _reject_unknown(table: dict, allowed: set, where: str):
    unknown = sorted(set(table) - allowed)
    if unknown:
        raise ConfigError(f"unknown key {unknown[0]!r} in {where}")


def _require(table: dict, key: str, where: str):
    if key not in table:
        raise ConfigError(f"missing key {key!r} in {where}")
    return table[key]


def _coerce(value, ref, where: str):
    """Coerce a TOML value to the shape of a reference default."""
    if isinstance(ref, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{where} must be a boolean")
        return value
    if isinstance(ref, int) and not isinstance(ref, bool):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where} must be an integer")
        return value
    if isinstance(ref, float) or ref is None:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where} must be a number")
        return float(value)
    if isinstance(ref, str):
        if not isinstance(value, str):
            raise ConfigError(f"{where} must be a string")
        return value
    if isinstance(ref, tuple):
        if not isinstance(value, list):
            raise ConfigError(f"{where} must be an array")
        elem_ref = ref[0] if len(ref) else 1.0
        return tuple(_coerce(v, elem_ref, f"{where}[{i}]") for i, v in enumerate(value))
    raise ConfigError(f"{where} has unsupported type")


def _model_overrides(name: str, table: dict, where: str) -> dict:
    params_cls, _ = MODEL_BUILDERS[name]
    defaults = params_cls()
    out = {}
    for key, value in table.items():
        if not hasattr(defaults, key):
            raise ConfigError(f"unknown key {key!r} in {where} for model {name!r}")
        out[key] = _coerce(value, getattr(defaults, key), f"{where}.{key}")
    return out


def parse_config(data: dict, origin: str = "config") -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError(f"{origin} must be a table")
    _reject_unknown(data, _TOP_KEYS, origin)

    command = _require(data, "command", origin)
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}; expected one of {COMMANDS}")

    model_tbl = dict(_require(data, "model", origin))
    name = _require(model_tbl, "name", "[model]")
    model_tbl.pop("name")
    if name != TYPED_NAME and name not in MODEL_BUILDERS:
        known = tuple(MODEL_BUILDERS) + (TYPED_NAME,)
        raise ConfigError(f"unknown model {name!r}; expected one of {known}")

    typed = None
    if name == TYPED_NAME:
        if model_tbl:
            raise ConfigError(
                "[model] carries only 'name' for custom-typed; put parameters in [typed]"
            )
        typed_tbl = _require(data, "typed", origin)
        _reject_unknown(typed_tbl, _TYPED_KEYS, "[typed]")
        base = _require(typed_tbl, "base", "[typed]")
        if base not in MODEL_BUILDERS:
            raise ConfigError(f"unknown base model {base!r} in [typed]")
        masses = _require(typed_tbl, "masses", "[typed]")
        members = _require(typed_tbl, "members", "[typed]")
        if not isinstance(members, list) or not members:
            raise ConfigError("[typed].members must be a non-empty array of tables")
        if not isinstance(masses, list) or len(masses) != len(members):
            raise ConfigError("[typed].masses must match [typed].members in length")
        typed = {
            "base": base,
            "masses": tuple(float(x) for x in masses),
            "members": tuple(
                _model_overrides(base, m, f"[typed].members[{i}]")
                for i, m in enumerate(members)
            ),
        }
        model_params = {}
    else:
        if "typed" in data:
            raise ConfigError("[typed] is only valid with model name 'custom-typed'")
        model_params = _model_overrides(name, model_tbl, "[model]")

    solver_tbl = data.get("solver", {})
    _reject_unknown(solver_tbl, _SOLVER_KEYS, "[solver]")
    defaults = SolverSettings()
    solver = SolverSettings(
        tol=_coerce(solver_tbl.get("tol", defaults.tol), defaults.tol, "[solver].tol"),
        damping=_coerce(
            solver_tbl.get("damping", defaults.damping), defaults.damping, "[solver].damping"
        ),
        max_outer=_coerce(
            solver_tbl.get("max_outer", defaults.max_outer),
            defaults.max_outer,
            "[solver].max_outer",
        ),
        mode=_coerce(solver_tbl.get("mode", defaults.mode), defaults.mode, "[solver].mode"),
    )
    if solver.mode not in ("mu_s", "phi"):
        raise ConfigError(f"[solver].mode must be 'mu_s' or 'phi', got {solver.mode!r}")
    if solver.tol <= 0:
        raise ConfigError("[solver].tol must be positive")
    if not 0.0 < solver.damping <= 1.0:
        raise ConfigError("[solver].damping must lie in (0, 1]")
    if solver.max_outer < 1:
        raise ConfigError("[solver].max_outer must be positive")

    probe_tbl = data.get("probe", {})
    _reject_unknown(probe_tbl, _PROBE_KEYS, "[probe]")
    starts = probe_tbl.get("starts", list(RunConfig.probe_starts))
    if not isinstance(starts, list) or not starts:
        raise ConfigError("[probe].starts must be a non-empty array of strings")
    for s in starts:
        if s not in START_KINDS:
            raise ConfigError(f"unknown start kind {s!r}; expected one of {START_KINDS}")

    sweep = None
    if "sweep" in data or command == "sweep":
        sweep_tbl = _require(data, "sweep", origin) if command == "sweep" else data["sweep"]
        _reject_unknown(sweep_tbl, _SWEEP_KEYS, "[sweep]")
        parameter = _require(sweep_tbl, "parameter", "[sweep]")
        if name == TYPED_NAME:
            raise ConfigError("sweep does not support custom-typed models")
        params_cls, _ = MODEL_BUILDERS[name]
        if not hasattr(params_cls(), parameter):
            raise ConfigError(f"[sweep].parameter {parameter!r} is not a {name!r} parameter")
        values = _require(sweep_tbl, "values", "[sweep]")
        if not isinstance(values, list) or len(values) < 2:
            raise ConfigError("[sweep].values needs at least two points")
        vals = tuple(float(v) for v in values)
        if any(b <= a for a, b in zip(vals, vals[1:])):
            raise ConfigError("[sweep].values must be strictly increasing")
        direction = _require(sweep_tbl, "expected_direction", "[sweep]")
        if direction not in ("increasing", "decreasing"):
            raise ConfigError(
                "[sweep].expected_direction must be 'increasing' or 'decreasing'"
            )
        sweep = {"parameter": parameter, "values": vals, "expected_direction": direction}

    simulate = None
    if "simulate" in data or command == "simulate":
        sim_tbl = (
            _require(data, "simulate", origin) if command == "simulate"
            else data["simulate"]
        )
        _reject_unknown(sim_tbl, _SIM_KEYS, "[simulate]")
        sim_ref = {
            "agents": 1000, "horizon": 50, "burn_in": 10, "cadence": 1,
            "state_mode": "grid-coupled", "sample_agents": 0,
        }
        simulate = {
            k: _coerce(sim_tbl.get(k, d), d, f"[simulate].{k}") for k, d in sim_ref.items()
        }

    return RunConfig(
        command=command,
        model_name=name,
        model_params=model_params,
        typed=typed,
        solver=solver,
        probe_starts=tuple(starts),
        sweep=sweep,
        simulate=simulate,
        out=_coerce(data.get("out", "."), ".", "out"),
        seed=_coerce(data.get("seed", 0), 0, "seed"),
        jobs=_coerce(data.get("jobs", 1), 1, "jobs"),
        plots=_coerce(data.get("plots", True), True, "plots"),
    )


def load_config(path: str) -> RunConfig:
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}") from exc
    return parse_config(data, origin=path)


def apply_overrides(cfg: RunConfig, **overrides) -> RunConfig:
    """CLI flags win over file values; None means the flag was not given."""
    updates = {}
    for key in ("command", "out", "seed", "jobs"):
        if overrides.get(key) is not None:
            updates[key] = overrides[key]
    solver_updates = {}
    for key in ("tol", "mode"):
        if overrides.get(key) is not None:
            solver_updates[key] = overrides[key]
    if solver_updates:
        updates["solver"] = replace(cfg.solver, **solver_updates)
    return replace(cfg, **updates) if updates else cfg


def build_spec(cfg: RunConfig) -> ModelSpec:
    """Construct the model the config describes.

    Parameter-range violations surface as InvalidParams from the builders;
    the command layer maps those to config errors since they originate in
    the file.
    """
    if cfg.model_name == TYPED_NAME:
        _, builder = MODEL_BUILDERS[cfg.typed["base"]]
        members = [builder(**mp) for mp in cfg.typed["members"]]
        family = TypedModelFamily(members=tuple(members), masses=cfg.typed["masses"])
        return family.extend()
    _, builder = MODEL_BUILDERS[cfg.model_name]
    return builder(**cfg.model_params)


def sweep_builder(cfg: RunConfig):
    """Model factory over the swept parameter, other parameters pinned."""
    _, builder = MODEL_BUILDERS[cfg.model_name]
    base = dict(cfg.model_params)
    parameter = cfg.sweep["parameter"]

    def build(value):
        over = dict(base)
        over[parameter] = value
        return builder(**over)

    return build


def config_payload(cfg: RunConfig) -> dict:
    """JSON-safe dict that parses back to the same RunConfig."""
    data = {
        "command": cfg.command,
        "out": cfg.out,
        "seed": cfg.seed,
        "jobs": cfg.jobs,
        "plots": cfg.plots,
        "model": {"name": cfg.model_name, **_jsonable(cfg.model_params)},
        "solver": {
            "tol": cfg.solver.tol,
            "damping": cfg.solver.damping,
            "max_outer": cfg.solver.max_outer,
            "mode": cfg.solver.mode,
        },
        "probe": {"starts": list(cfg.probe_starts)},
    }
    if cfg.typed is not None:
        data["typed"] = {
            "base": cfg.typed["base"],
            "masses": list(cfg.typed["masses"]),
            "members": [_jsonable(m) for m in cfg.typed["members"]],
        }
    if cfg.sweep is not None:
        data["sweep"] = {
            "parameter": cfg.sweep["parameter"],
            "values": list(cfg.sweep["values"]),
            "expected_direction": cfg.sweep["expected_direction"],
        }
    if cfg.simulate is not None:
        data["simulate"] = dict(cfg.simulate)
    return data


def _jsonable(params: dict) -> dict:
    out = {}
    for key, value in params.items():
        if isinstance(value, tuple):
            out[key] = [list(v) if isinstance(v, tuple) else v for v in value]
        else:
            out[key] = value
    return out


def rebuild_config(payload: dict) -> RunConfig:
    """Inverse of config_payload, used when replaying a result file."""
    return parse_config(payload, origin="embedded config")
