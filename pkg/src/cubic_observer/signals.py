"""Deterministic input and disturbance signals.

All signals are zero for negative time, which is the pre-history every
simulation assumes.
"""
import math
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np

from .exceptions import InvalidInputError

KINDS = ("zero", "step", "sine", "piecewise-constant")
JUMP_TOL = 1e-9


@dataclass(frozen=True)
class SignalSpec:
    kind: str = "zero"
    amplitude: float = 1.0
    frequency: float = 0.0
    step_time: float = 0.0
    breakpoints: Tuple[Tuple[float, float], ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidInputError(f"unknown signal kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "step" and self.step_time < 0:
            raise InvalidInputError("step_time must be >= 0")
        bps = tuple((float(t), float(v)) for t, v in self.breakpoints)
        if any(b[0] >= a[0] for a, b in zip(bps[1:], bps[:-1])):
            raise InvalidInputError("breakpoint times must be strictly increasing")
        object.__setattr__(self, "breakpoints", bps)
        for name in ("amplitude", "frequency", "step_time"):
            if not np.isfinite(getattr(self, name)):
                raise InvalidInputError(f"signal {name} must be finite")

    def __call__(self, t):
        """Right-continuous value at ``t`` (scalar or array)."""
        if np.isscalar(t):
            return self._scalar(float(t))
        t = np.asarray(t, dtype=float)
        if self.kind == "zero":
            out = np.zeros_like(t)
        elif self.kind == "step":
            out = np.where(t >= self.step_time, self.amplitude, 0.0)
        elif self.kind == "sine":
            out = self.amplitude * np.sin(self.frequency * t)
        else:
            out = np.zeros_like(t)
            for tb, value in self.breakpoints:
                out = np.where(t >= tb, value, out)
        out = np.where(t < 0, 0.0, out)
        return float(out) if out.ndim == 0 else out

    def _scalar(self, t):
        if t < 0 or self.kind == "zero":
            return 0.0
        if self.kind == "step":
            return self.amplitude if t >= self.step_time else 0.0
        if self.kind == "sine":
            return self.amplitude * math.sin(self.frequency * t)
        out = 0.0
        for tb, value in self.breakpoints:
            if t >= tb:
                out = value
        return out

    def left_limit(self, t):
        """Value just before ``t``; RK4 uses it for a step's final stage so grid-aligned jumps integrate exactly."""
        t = float(t)
        if t <= 0 or self.kind == "zero":
            return 0.0
        if self.kind == "step":
            return self.amplitude if t > self.step_time else 0.0
        if self.kind == "sine":
            return self.amplitude * math.sin(self.frequency * t)
        out = 0.0
        for tb, value in self.breakpoints:
            if t > tb:
                out = value
        return out

    def jumps(self):
        """Times where the signal is discontinuous."""
        if self.kind == "step":
            return [self.step_time] if self.amplitude != 0 else []
        if self.kind == "piecewise-constant":
            out, prev = [], 0.0
            for tb, value in self.breakpoints:
                if value != prev and tb >= 0:
                    out.append(tb)
                prev = value
            return out
        return []

    def sample_for_quadrature(self, t, side):
        """Samples with jump nodes replaced by the ``"left"`` or ``"right"`` limit."""
        t = np.asarray(t, dtype=float)
        out = np.array(self(t), dtype=float, ndmin=1).copy()
        tt = np.atleast_1d(t)
        for tj in self.jumps():
            hit = np.abs(tt - tj) <= JUMP_TOL * max(1.0, abs(tj))
            if np.any(hit):
                left, right = self.left_limit(tj), self._scalar(tj)
                out[hit] = left if side == "left" else right
        return out if t.ndim else float(out[0])

    def to_dict(self):
        d = {"kind": self.kind}
        if self.kind != "zero":
            d["amplitude"] = self.amplitude
        if self.kind == "sine":
            d["frequency"] = self.frequency
        if self.kind == "step":
            d["step_time"] = self.step_time
        if self.kind == "piecewise-constant":
            d["breakpoints"] = [list(b) for b in self.breakpoints]
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "breakpoints" in d:
            d["breakpoints"] = tuple(tuple(b) for b in d["breakpoints"])
        return cls(**d)


ZERO = SignalSpec()


def as_signal_list(spec, width):
    """Broadcast one spec (or ``None``) to ``width`` columns, or validate a list."""
    if spec is None:
        return [ZERO] * width
    if isinstance(spec, SignalSpec):
        return [spec] * width
    specs: List[SignalSpec] = [s if isinstance(s, SignalSpec) else SignalSpec.from_dict(s) for s in spec]
    if len(specs) == 1:
        return specs * width
    if len(specs) != width:
        raise InvalidInputError(f"expected {width} signal specs, got {len(specs)}")
    return specs


def evaluate(specs, t, left=False):
    """Vector of channel values at scalar time ``t`` (left limits if ``left``)."""
    if left:
        return np.array([s.left_limit(t) for s in specs])
    return np.array([s._scalar(float(t)) for s in specs])
