"""JSON run configuration: schema, dimension checks and named examples.

A configuration has four blocks::

    {
      "plant":      {"A": [[...]], "C": [[...]], "state_delays": [{"A": ..., "tau": ...}],
                     "input_channels": [{"B": ..., "delta": ...}], "unknown_input": [[...]],
                     "output_delays": [{"C": ..., "d": ...}]},
      "observer":   {"mode": "fullorder" | "alpha", "poles": [...], "alpha": ..., "Z1": ..., "Z2": ...,
                     "theta": ..., "gamma": ..., "Q": ..., "use_paper_cbar": false, "cbar_override": ...,
                     "equilibrium_trials": 200},
      "simulation": {"t_end": ..., "step_h": ..., "x0": [...], "xhat0": [...],
                     "inputs": [<signal or list of signals per channel>], "disturbance": <signal or list>,
                     "output_delay_mode": "measurement" | "oracle"},
      "output":     {"directory": "out", "formats": ["csv", "json"]}
    }

Poles are numbers or ``[re, im]`` pairs. Signals are objects with
``kind`` in ``zero | step | sine | piecewise-constant``.
"""
import copy
import hashlib
import json
from dataclasses import dataclass

import jsonschema
import numpy as np

from . import example
from .design import PlantModel
from .exceptions import ConfigError, ObserverError
from .signals import SignalSpec
from .simulate import DEFAULT_STEP, DEFAULT_T_END, SimulationConfig

_MATRIX = {"type": "array", "minItems": 1,
           "items": {"type": "array", "minItems": 1, "items": {"type": "number"}}}
_VECTOR = {"type": "array", "items": {"type": "number"}}
_SIGNAL = {
    "type": "object",
    "required": ["kind"],
    "properties": {
        "kind": {"enum": ["zero", "step", "sine", "piecewise-constant"]},
        "amplitude": {"type": "number"},
        "frequency": {"type": "number"},
        "step_time": {"type": "number", "minimum": 0},
        "breakpoints": {"type": "array", "items": {"type": "array", "minItems": 2, "maxItems": 2,
                                                   "items": {"type": "number"}}},
    },
    "additionalProperties": False,
}
_SIGNALS = {"oneOf": [_SIGNAL, {"type": "array", "items": _SIGNAL}]}
_POLE = {"oneOf": [{"type": "number"},
                   {"type": "array", "minItems": 2, "maxItems": 2, "items": {"type": "number"}}]}

SCHEMA = {
    "type": "object",
    "required": ["plant", "observer"],
    "additionalProperties": False,
    "properties": {
        "plant": {
            "type": "object",
            "required": ["A"],
            "additionalProperties": False,
            "properties": {
                "A": _MATRIX,
                "C": _MATRIX,
                "state_delays": {"type": "array", "items": {
                    "type": "object", "required": ["A", "tau"], "additionalProperties": False,
                    "properties": {"A": _MATRIX, "tau": {"type": "number", "exclusiveMinimum": 0}}}},
                "input_channels": {"type": "array", "items": {
                    "type": "object", "required": ["B"], "additionalProperties": False,
                    "properties": {"B": _MATRIX, "delta": {"type": "number", "minimum": 0}}}},
                "unknown_input": _MATRIX,
                "output_delays": {"type": "array", "minItems": 1, "items": {
                    "type": "object", "required": ["C", "d"], "additionalProperties": False,
                    "properties": {"C": _MATRIX, "d": {"type": "number", "minimum": 0}}}},
            },
        },
        "observer": {
            "type": "object",
            "required": ["mode"],
            "additionalProperties": False,
            "properties": {
                "mode": {"enum": ["fullorder", "alpha"]},
                "poles": {"type": "array", "items": _POLE},
                "alpha": {"type": "number", "exclusiveMinimum": 0},
                "Z1": _MATRIX,
                "Z2": _MATRIX,
                "theta": _MATRIX,
                "gamma": {"type": "number", "exclusiveMinimum": 0},
                "Q": _MATRIX,
                "use_paper_cbar": {"type": "boolean"},
                "cbar_override": _MATRIX,
                "equilibrium_trials": {"type": "integer", "minimum": 0},
            },
        },
        "simulation": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "t_end": {"type": "number", "exclusiveMinimum": 0},
                "step_h": {"type": "number", "exclusiveMinimum": 0},
                "x0": _VECTOR,
                "xhat0": _VECTOR,
                "inputs": {"type": "array", "items": _SIGNALS},
                "disturbance": _SIGNALS,
                "output_delay_mode": {"enum": ["measurement", "oracle"]},
            },
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "directory": {"type": "string"},
                "formats": {"type": "array", "items": {"enum": ["csv", "json"]}},
            },
        },
    },
}

OBSERVER_DEFAULTS = {"gamma": 1.0, "use_paper_cbar": False, "equilibrium_trials": 200}
SIMULATION_DEFAULTS = {"t_end": DEFAULT_T_END, "step_h": DEFAULT_STEP, "output_delay_mode": "measurement"}
OUTPUT_DEFAULTS = {"directory": "out", "formats": ["csv", "json"]}


def _parse_pole(p):
    return complex(p[0], p[1]) if isinstance(p, list) else complex(p)


def _arr(value):
    return None if value is None else np.array(value, dtype=float)


@dataclass
class RunConfig:
    """Validated configuration; ``to_dict`` returns the normalized JSON structure."""

    plant: dict
    observer: dict
    simulation: dict
    output: dict

    @classmethod
    def from_dict(cls, raw):
        raw = copy.deepcopy(raw)
        validator = jsonschema.Draft7Validator(SCHEMA)
        errors = sorted(validator.iter_errors(raw), key=lambda e: list(e.absolute_path))
        if errors:
            lines = [f"{'/'.join(str(p) for p in e.absolute_path) or '<root>'}: {e.message}" for e in errors]
            raise ConfigError("invalid configuration:\n  " + "\n  ".join(lines))
        cfg = cls(
            plant=raw["plant"],
            observer={**OBSERVER_DEFAULTS, **raw["observer"]},
            simulation={**SIMULATION_DEFAULTS, **raw.get("simulation", {})},
            output={**OUTPUT_DEFAULTS, **raw.get("output", {})},
        )
        cfg._check_dimensions()
        return cfg

    @classmethod
    def load(cls, path):
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read configuration {path}: {exc}") from exc
        return cls.from_dict(raw)

    def to_dict(self):
        return copy.deepcopy({"plant": self.plant, "observer": self.observer,
                              "simulation": self.simulation, "output": self.output})

    def digest(self):
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def _fail(self, field, message):
        raise ConfigError(f"{field}: {message}")

    def _matrix_fields(self):
        p, o = self.plant, self.observer
        yield "plant/A", p["A"]
        for key in ("C", "unknown_input"):
            if key in p:
                yield f"plant/{key}", p[key]
        for group, key in (("state_delays", "A"), ("input_channels", "B"), ("output_delays", "C")):
            for i, item in enumerate(p.get(group, [])):
                yield f"plant/{group}/{i}/{key}", item[key]
        for key in ("Z1", "Z2", "theta", "Q", "cbar_override"):
            if key in o:
                yield f"observer/{key}", o[key]

    def _check_dimensions(self):
        for field, value in self._matrix_fields():
            lengths = {len(row) for row in value}
            if len(lengths) > 1:
                self._fail(field, f"rows have different lengths {sorted(lengths)}")
        try:
            plant = self.build_plant()
        except ObserverError as exc:
            raise ConfigError(f"plant: {exc}") from exc
        n, ny = plant.n_states, plant.n_outputs
        obs = self.observer

        def shape(field, value, want):
            arr = np.array(value, dtype=float)
            if arr.shape != want:
                self._fail(field, f"shape {arr.shape}, expected {want}")
            return arr

        if obs["mode"] == "fullorder":
            if "poles" not in obs:
                self._fail("observer/poles", "required for mode 'fullorder'")
            if len(obs["poles"]) != n:
                self._fail("observer/poles", f"{len(obs['poles'])} poles given for {n} states")
        elif "alpha" not in obs:
            self._fail("observer/alpha", "required for mode 'alpha'")
        for key, want in (("Z1", (n, ny)), ("Z2", (n, ny)), ("theta", (ny, ny)), ("Q", (n, n)),
                          ("cbar_override", (ny, n))):
            if key in obs:
                shape(f"observer/{key}", obs[key], want)
        if "theta" in obs:
            th = np.array(obs["theta"], dtype=float)
            if np.abs(th - th.T).max() > 1e-12 * max(1.0, np.abs(th).max()):
                self._fail("observer/theta", "must be symmetric")
            if np.linalg.eigvalsh(th).min() < -1e-12 * max(1.0, np.abs(th).max()):
                self._fail("observer/theta", "must be positive semidefinite")
        if "Q" in obs:
            Q = np.array(obs["Q"], dtype=float)
            if np.abs(Q - Q.T).max() > 1e-12 * max(1.0, np.abs(Q).max()) or np.linalg.eigvalsh(Q).min() <= 0:
                self._fail("observer/Q", "must be symmetric positive definite")
        if obs.get("use_paper_cbar") and (n, ny) != example.PRINTED_CBAR.shape[::-1]:
            self._fail("observer/use_paper_cbar", "the printed Cbar only fits a 4-state, 2-output plant")

        sim = self.simulation
        for key in ("x0", "xhat0"):
            if key in sim and len(sim[key]) != n:
                self._fail(f"simulation/{key}", f"length {len(sim[key])}, expected {n}")
        if "inputs" in sim and len(sim["inputs"]) != len(plant.input_channels):
            self._fail("simulation/inputs", f"{len(sim['inputs'])} entries for {len(plant.input_channels)} input channels")
        for j, (spec, (B, _)) in enumerate(zip(sim.get("inputs", []), plant.input_channels)):
            if isinstance(spec, list) and len(spec) not in (1, B.shape[1]):
                self._fail(f"simulation/inputs/{j}", f"{len(spec)} signals for {B.shape[1]} input columns")
        try:
            self.build_simulation().check_plant(plant)
        except ObserverError as exc:
            raise ConfigError(f"simulation: {exc}") from exc

    def build_plant(self):
        p = self.plant
        return PlantModel(
            A=_arr(p["A"]),
            C=_arr(p.get("C")),
            state_delays=[(_arr(s["A"]), s["tau"]) for s in p.get("state_delays", [])],
            input_channels=[(_arr(c["B"]), c.get("delta", 0.0)) for c in p.get("input_channels", [])],
            unknown_input=_arr(p.get("unknown_input")),
            output_delays=[(_arr(o["C"]), o["d"]) for o in p["output_delays"]] if "output_delays" in p else None,
        )

    def effective_C_override(self):
        if self.observer.get("use_paper_cbar"):
            return example.PRINTED_CBAR.copy()
        return _arr(self.observer.get("cbar_override"))

    def build_estimator(self, seed=0):
        from .estimators import CubicObserver
        obs = self.observer
        return CubicObserver(
            method=obs["mode"],
            poles=[_parse_pole(p) for p in obs["poles"]] if "poles" in obs else None,
            alpha=obs.get("alpha", 1.0),
            Z1=_arr(obs.get("Z1")),
            Z2=_arr(obs.get("Z2")),
            theta=_arr(obs.get("theta")),
            gamma=obs["gamma"],
            Q=_arr(obs.get("Q")),
            C_eff=self.effective_C_override(),
            seed=seed,
        )

    def build_simulation(self):
        sim = self.simulation
        n = np.array(self.plant["A"]).shape[0]
        x0 = sim.get("x0", [0.0] * n)

        def signals(spec):
            if isinstance(spec, list):
                return [SignalSpec.from_dict(s) for s in spec]
            return SignalSpec.from_dict(spec)

        return SimulationConfig(
            x0=x0,
            xhat0=sim.get("xhat0", [0.0] * n),
            t_end=sim["t_end"],
            step_h=sim["step_h"],
            inputs=[signals(s) for s in sim["inputs"]] if "inputs" in sim else None,
            disturbance=signals(sim["disturbance"]) if "disturbance" in sim else None,
        )

    def resolved_defaults(self, n, ny):
        """Every default actually used, for the provenance record."""
        obs = self.observer
        return {
            "theta": obs.get("theta", np.eye(ny).tolist()),
            "Q": obs.get("Q", np.eye(n).tolist()),
            "gamma": obs["gamma"],
            "step_h": self.simulation["step_h"],
            "t_end": self.simulation["t_end"],
            "output_delay_mode": self.simulation["output_delay_mode"],
        }


def _mat(M):
    return np.asarray(M, dtype=float).tolist()


def _delayed_output_example():
    return {
        "plant": {
            "A": _mat(example.A),
            "input_channels": [{"B": _mat(example.B1), "delta": example.DELTA1}],
            "output_delays": [{"C": _mat(example.C1), "d": example.D1}, {"C": _mat(example.C2), "d": example.D2}],
        },
        "observer": {"mode": "fullorder", "poles": list(example.POLES), "theta": _mat(np.eye(2)),
                     "gamma": 1.0, "Q": _mat(np.eye(4))},
        "simulation": {"t_end": example.T_END, "step_h": example.STEP_H, "x0": list(example.X0),
                       "xhat0": list(example.XHAT0), "inputs": [dict(example.INPUT)],
                       "output_delay_mode": "measurement"},
    }


def _theorem3_two_state():
    return {
        "plant": {"A": [[0.0, 1.0], [-2.0, -3.0]], "C": [[1.0, 0.0]]},
        "observer": {"mode": "alpha", "alpha": 1.0, "gamma": 1.0},
        "simulation": {"t_end": 10.0, "step_h": 1e-3, "x0": [1.0, -1.0], "xhat0": [0.0, 0.0]},
    }


def _theorem3_four_state():
    return {
        "plant": {"A": _mat(example.A), "C": _mat(example.C1)},
        "observer": {"mode": "alpha", "alpha": 1.0, "gamma": 1.0},
        "simulation": {"t_end": 10.0, "step_h": 1e-3, "x0": [1.0, -0.5, 0.5, 1.0], "xhat0": [0.0] * 4},
    }


def _unknown_input():
    # Bd = W F for the W produced by the default Z1 of this plant, so decoupling is exact
    from .design import alpha_compatible_z1
    A = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [-6.0, -11.0, -6.0]])
    C = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    alpha = 2.0
    Z1 = alpha_compatible_z1(A, C, alpha)
    W = alpha * np.eye(3) + A + Z1 @ C
    Bd = W @ np.array([[1.0], [0.5], [-0.25]])
    return {
        "plant": {"A": _mat(A), "C": _mat(C), "unknown_input": _mat(Bd)},
        "observer": {"mode": "alpha", "alpha": alpha, "Z1": _mat(Z1), "gamma": 1.0},
        "simulation": {"t_end": 10.0, "step_h": 1e-3, "x0": [1.0, 0.0, -1.0], "xhat0": [0.0] * 3,
                       "disturbance": {"kind": "sine", "amplitude": 5.0, "frequency": 2.0}},
    }


def _state_delay():
    return {
        "plant": {
            "A": [[-1.0, 1.0], [0.0, -2.0]],
            "C": [[1.0, 0.0], [0.0, 1.0]],
            "state_delays": [{"A": [[0.2, 0.0], [0.1, -0.3]], "tau": 0.5}],
            "input_channels": [{"B": [[0.0], [1.0]], "delta": 0.25}],
        },
        "observer": {"mode": "fullorder", "poles": [-3.0, -4.0], "gamma": 1.0},
        "simulation": {"t_end": 20.0, "step_h": 1e-3, "x0": [1.0, -1.0], "xhat0": [0.0, 0.0],
                       "inputs": [{"kind": "sine", "amplitude": 1.0, "frequency": 1.0}]},
    }


EXAMPLES = {
    "paper-example": _delayed_output_example,
    "theorem3-2state": _theorem3_two_state,
    "theorem3-4state": _theorem3_four_state,
    "unknown-input": _unknown_input,
    "state-delay": _state_delay,
}


def example_config(name):
    """Normalized configuration for one of :data:`EXAMPLES`."""
    if name not in EXAMPLES:
        raise ConfigError(f"unknown example {name!r}; choose from {sorted(EXAMPLES)}")
    return RunConfig.from_dict(EXAMPLES[name]())
