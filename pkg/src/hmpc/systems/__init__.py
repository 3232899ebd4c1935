"""Built-in example plants with their costs, feedbacks and target sets."""

from __future__ import annotations

from typing import Callable

from .base import Bundle, InvalidParams
from .bouncing_ball import BouncingBallParams, bouncing_ball
from .sample_hold import SampleHoldParams, sample_hold
from .thermostat import ThermostatParams, thermostat

_REGISTRY: dict[str, tuple[Callable[..., Bundle], type]] = {
    "bouncing-ball": (bouncing_ball, BouncingBallParams),
    "sample-hold": (sample_hold, SampleHoldParams),
    "thermostat": (thermostat, ThermostatParams),
}

# Config keys that differ from dataclass field names.
_ALIASES = {"lambda": "lam"}


def register(name: str, builder: Callable[..., Bundle], params_type: type) -> None:
    """Add a user plant under ``name``."""
    _REGISTRY[name] = (builder, params_type)


def names() -> list[str]:
    return sorted(_REGISTRY)


def build(name: str, **params) -> Bundle:
    key = name.replace("_", "-").lower()
    if key not in _REGISTRY:
        raise KeyError(f"unknown plant {name!r}; known: {', '.join(names())}")
    builder, ptype = _REGISTRY[key]
    fields = {_ALIASES.get(k, k): v for k, v in params.items()}
    try:
        return builder(ptype(**fields))
    except TypeError as e:
        raise InvalidParams(str(e)) from None


__all__ = [
    "Bundle",
    "InvalidParams",
    "BouncingBallParams",
    "SampleHoldParams",
    "ThermostatParams",
    "bouncing_ball",
    "sample_hold",
    "thermostat",
    "build",
    "names",
    "register",
]
