"""Problem data for the dividend-control model.

The surplus of the company evolves as

    dX(t) = c(t) dt + sigma dW(t) + dJ(t) - dD(t),

where J is a compound Poisson process with intensity ``lam(t)`` and i.i.d.
jump sizes Y (first moment p1, second raw moment p2), and D is the dividend
process (a continuous rate plus lump payments at jump epochs).  The control
objective penalises squared deviations of the dividend rate from an affine
benchmark l0(t) + l1(t) x, lump payments, and the surplus from a target
x0(t), discounted at rate ``delta``; realised dividends are valued at rate
``delta_tilde``.

Everything here is immutable after construction and safe to share across
threads.  Moments of a jump law are always recomputed analytically from its
parameters; declared values that disagree are reported by :func:`validate`.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
from scipy.special import ndtri

__all__ = [
    "TimeFunction",
    "JumpLaw",
    "ModelParams",
    "LQObjective",
    "jump_moments",
    "model_violations",
    "validate",
]

# Smallest uniform fed to an inverse CDF; keeps ndtri/log away from 0.
_U_FLOOR = 1e-300


@dataclass(frozen=True)
class TimeFunction:
    """Deterministic time dependence: a constant or a piecewise-constant table.

    Piecewise tables are right-continuous step functions: the value at t is
    the one attached to the last breakpoint <= t.  The first breakpoint must
    be 0 so the whole horizon is covered.
    """

    breakpoints: tuple[float, ...]
    levels: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.breakpoints) != len(self.levels) or not self.breakpoints:
            raise ValueError("breakpoints and levels must be non-empty and equal length")
        if self.breakpoints[0] != 0.0:
            raise ValueError("first breakpoint must be 0")
        if any(b2 <= b1 for b1, b2 in zip(self.breakpoints, self.breakpoints[1:])):
            raise ValueError("breakpoints must be strictly increasing")

    @classmethod
    def constant(cls, value: float) -> "TimeFunction":
        return cls((0.0,), (float(value),))

    @classmethod
    def piecewise(cls, breakpoints: Iterable[float], levels: Iterable[float]) -> "TimeFunction":
        return cls(tuple(float(b) for b in breakpoints), tuple(float(v) for v in levels))

    @classmethod
    def coerce(cls, value: "TimeFunction | float | int") -> "TimeFunction":
        if isinstance(value, TimeFunction):
            return value
        return cls.constant(float(value))

    @property
    def is_constant(self) -> bool:
        return len(self.levels) == 1

    def value(self, t: float) -> float:
        if self.is_constant:
            return self.levels[0]
        # rightmost breakpoint <= t
        idx = int(np.searchsorted(self.breakpoints, t, side="right")) - 1
        return self.levels[max(idx, 0)]

    def values(self, ts: np.ndarray) -> np.ndarray:
        if self.is_constant:
            return np.full(np.shape(ts), self.levels[0])
        idx = np.searchsorted(self.breakpoints, ts, side="right") - 1
        return np.asarray(self.levels)[np.maximum(idx, 0)]

    def max_value(self) -> float:
        return max(self.levels)

    def min_value(self) -> float:
        return min(self.levels)

    def shifted(self, offset: float) -> "TimeFunction":
        return TimeFunction(self.breakpoints, tuple(v + offset for v in self.levels))

    def to_json(self) -> object:
        if self.is_constant:
            return self.levels[0]
        return {"breakpoints": list(self.breakpoints), "values": list(self.levels)}


@dataclass(frozen=True)
class JumpLaw:
    """Distribution of a single jump of the surplus.

    Supported kinds: ``none``, ``normal(mean, sd)``, ``exponential(rate, sign)``
    and ``shifted_exponential(rate, shift, sign)`` where ``sign`` (+1/-1) flips
    the variable so both upward and downward jumps are covered.  ``p1`` and
    ``p2`` are the first and second raw moments; the classmethod constructors
    fill them analytically.
    """

    kind: str
    mean: float = 0.0
    sd: float = 0.0
    rate: float = 0.0
    shift: float = 0.0
    sign: int = 1
    p1: float = 0.0
    p2: float = 0.0

    @classmethod
    def none(cls) -> "JumpLaw":
        return cls("none")

    @classmethod
    def normal(cls, mean: float, sd: float) -> "JumpLaw":
        law = cls("normal", mean=mean, sd=sd)
        m1, m2 = jump_moments(law)
        return cls("normal", mean=mean, sd=sd, p1=m1, p2=m2)

    @classmethod
    def exponential(cls, rate: float, sign: int = 1) -> "JumpLaw":
        law = cls("exponential", rate=rate, sign=sign)
        m1, m2 = jump_moments(law)
        return cls("exponential", rate=rate, sign=sign, p1=m1, p2=m2)

    @classmethod
    def shifted_exponential(cls, rate: float, shift: float, sign: int = 1) -> "JumpLaw":
        law = cls("shifted_exponential", rate=rate, shift=shift, sign=sign)
        m1, m2 = jump_moments(law)
        return cls("shifted_exponential", rate=rate, shift=shift, sign=sign, p1=m1, p2=m2)

    def quantile(self, u: np.ndarray) -> np.ndarray:
        """Inverse CDF, vectorised; u in [0, 1)."""
        u = np.asarray(u)
        if self.kind == "none":
            return np.zeros_like(u)
        if self.kind == "normal":
            return self.mean + self.sd * ndtri(np.maximum(u, _U_FLOOR))
        if self.kind == "exponential":
            return self.sign * (-np.log1p(-u) / self.rate)
        if self.kind == "shifted_exponential":
            return self.sign * (self.shift + (-np.log1p(-u) / self.rate))
        raise ValueError(f"unsupported jump law kind: {self.kind!r}")

    def to_json(self) -> dict:
        out: dict = {"kind": self.kind}
        if self.kind == "normal":
            out.update(mean=self.mean, sd=self.sd)
        elif self.kind == "exponential":
            out.update(rate=self.rate, sign="+" if self.sign > 0 else "-")
        elif self.kind == "shifted_exponential":
            out.update(rate=self.rate, shift=self.shift, sign="+" if self.sign > 0 else "-")
        return out


def jump_moments(law: JumpLaw) -> tuple[float, float]:
    """Analytic first and second raw moments of a jump law.

    Raises ValueError for an unsupported kind.  Declared ``p1``/``p2`` on the
    law are ignored: moments always come from the distribution parameters.
    """
    if law.kind == "none":
        return 0.0, 0.0
    if law.kind == "normal":
        return law.mean, law.mean * law.mean + law.sd * law.sd
    if law.kind == "exponential":
        m1 = 1.0 / law.rate
        return law.sign * m1, 2.0 / (law.rate * law.rate)
    if law.kind == "shifted_exponential":
        m1 = law.shift + 1.0 / law.rate
        m2 = law.shift * law.shift + 2.0 * law.shift / law.rate + 2.0 / (law.rate * law.rate)
        return law.sign * m1, m2
    raise ValueError(f"unsupported jump law kind: {law.kind!r}")


@dataclass(frozen=True)
class ModelParams:
    """Surplus dynamics: drift, diffusion, jumps, discount rates, horizon."""

    c: TimeFunction
    sigma: float
    intensity: TimeFunction
    jumps: JumpLaw
    delta: float
    delta_tilde: float
    horizon: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "c", TimeFunction.coerce(self.c))
        object.__setattr__(self, "intensity", TimeFunction.coerce(self.intensity))

    @property
    def has_jumps(self) -> bool:
        return self.jumps.kind != "none" and self.intensity.max_value() > 0.0

    def to_json(self) -> dict:
        return {
            "c": self.c.to_json(),
            "sigma": self.sigma,
            "lambda": self.intensity.to_json(),
            "jumps": self.jumps.to_json(),
            "delta": self.delta,
            "delta_tilde": self.delta_tilde,
            "T": self.horizon,
        }

    def content_hash(self) -> str:
        return _hash_json(self.to_json())


@dataclass(frozen=True)
class LQObjective:
    """Weights and benchmarks of the quadratic dividend-control objective.

    ``l0``/``l1`` define the affine dividend-rate benchmark, ``x0`` the surplus
    target with running weight ``gamma`` and terminal mass ``delta_gamma_T``,
    ``gamma_i`` weighs lump payments, and (``kappa``, ``tau``, ``x_T``) encode
    the terminal-surplus term: tau=0 none, tau=1 linear (expected-value
    constraint via the multiplier kappa), tau=2 quadratic.
    """

    l0: TimeFunction
    l1: TimeFunction
    x0: TimeFunction
    gamma: TimeFunction
    delta_gamma_T: float = 0.0
    gamma_i: TimeFunction = field(default_factory=lambda: TimeFunction.constant(0.0))
    kappa: float = 0.0
    tau: int = 0
    x_T: float = 0.0

    def __post_init__(self) -> None:
        for name in ("l0", "l1", "x0", "gamma", "gamma_i"):
            object.__setattr__(self, name, TimeFunction.coerce(getattr(self, name)))

    def to_json(self) -> dict:
        return {
            "l0": self.l0.to_json(),
            "l1": self.l1.to_json(),
            "x0": self.x0.to_json(),
            "gamma": self.gamma.to_json(),
            "delta_gamma_T": self.delta_gamma_T,
            "gamma_i": self.gamma_i.to_json(),
            "kappa": self.kappa,
            "tau": self.tau,
            "x_T": self.x_T,
        }

    def content_hash(self) -> str:
        return _hash_json(self.to_json())


def _hash_json(payload: object) -> str:
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


# relative tolerance for declared-vs-analytic jump moments
_MOMENT_RTOL = 1e-12


def _check_nonnegative(tf: TimeFunction, name: str, out: list[str]) -> None:
    if tf.min_value() < 0.0:
        out.append(f"{name} must be >= 0 everywhere (min is {tf.min_value()})")


def _check_breakpoints(tf: TimeFunction, name: str, horizon: float, out: list[str]) -> None:
    if tf.breakpoints[-1] > horizon:
        out.append(f"{name} has breakpoints beyond the horizon T={horizon}")


def model_violations(model: ModelParams) -> list[str]:
    """Invariant violations of the surplus model alone."""
    out: list[str] = []

    if not model.horizon > 0.0:
        out.append("T must be > 0")
    if model.sigma < 0.0:
        out.append("sigma must be >= 0")
    if model.delta < 0.0:
        out.append("delta must be >= 0")
    if not model.delta_tilde > 0.0:
        out.append("delta_tilde must be > 0")
    _check_nonnegative(model.intensity, "lambda", out)
    if model.jumps.kind == "none" and model.intensity.max_value() > 0.0:
        out.append("lambda must be identically 0 when the jump law is 'none'")

    law = model.jumps
    if law.kind == "none":
        if law.p1 != 0.0 or law.p2 != 0.0:
            out.append("jump law 'none' must have p1 = p2 = 0")
    else:
        if law.kind in ("exponential", "shifted_exponential") and not law.rate > 0.0:
            out.append("jump rate must be > 0")
        if law.kind == "normal" and law.sd < 0.0:
            out.append("jump sd must be >= 0")
        if law.sign not in (1, -1):
            out.append("jump sign must be +1 or -1")
        try:
            m1, m2 = jump_moments(law)
        except ValueError as exc:
            out.append(str(exc))
        else:
            if not (math.isfinite(law.p1) and math.isfinite(law.p2)):
                out.append("jump moments must be finite")
            else:
                scale1 = max(1.0, abs(m1))
                scale2 = max(1.0, abs(m2))
                if abs(law.p1 - m1) > _MOMENT_RTOL * scale1:
                    out.append(f"declared p1={law.p1} disagrees with analytic p1={m1}")
                if abs(law.p2 - m2) > _MOMENT_RTOL * scale2:
                    out.append(f"declared p2={law.p2} disagrees with analytic p2={m2}")
                if law.p2 < law.p1 * law.p1 - _MOMENT_RTOL:
                    out.append("p2 must be >= p1^2")

    for tf, name in ((model.c, "c"), (model.intensity, "lambda")):
        _check_breakpoints(tf, name, model.horizon, out)
    return out


def validate(model: ModelParams, obj: LQObjective) -> list[str]:
    """Collect every invariant violation; an empty list means the data is ok.

    Violations are data, not exceptions: callers decide whether to proceed.
    """
    out = model_violations(model)

    if obj.tau not in (0, 1, 2):
        out.append("tau must be in {0,1,2}")
    if obj.kappa < 0.0:
        out.append("kappa must be >= 0")
    if obj.delta_gamma_T < 0.0:
        out.append("delta_gamma_T must be >= 0")
    _check_nonnegative(obj.gamma, "gamma", out)
    _check_nonnegative(obj.gamma_i, "gamma_i", out)
    _check_nonnegative(obj.x0, "x0", out)

    for tf, name in (
        (obj.l0, "l0"),
        (obj.l1, "l1"),
        (obj.x0, "x0"),
        (obj.gamma, "gamma"),
        (obj.gamma_i, "gamma_i"),
    ):
        _check_breakpoints(tf, name, model.horizon, out)

    return out
