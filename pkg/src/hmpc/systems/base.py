from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Optional

import numpy as np

from ..costs import CostSpec, TargetSet
from ..horizon import PredictionHorizon
from ..plant import Feedback, HybridPlant


class InvalidParams(ValueError):
    """Example parameters violate a stated invariant."""


@dataclass(frozen=True)
class Bundle:
    """Everything needed to simulate, optimize and verify one example plant.

    ``closed_loop_guard`` scalarizes the closed-loop jump set for event
    detection under ``feedback``.  ``derived`` names extra CSV columns.
    ``sampling_box`` and ``jump_sampling_box`` are default verification
    regions (a dimension with equal bounds is held fixed); dimensions listed
    in ``discrete_dims`` take only the given values.  ``growth_candidate``
    is a pair ``(function, rate)`` whose flow derivative is bounded below by
    ``rate`` times its value, used by the sufficient-condition check.
    """

    name: str
    plant: HybridPlant
    cost: CostSpec
    feedback: Feedback
    target: TargetSet
    horizon: PredictionHorizon
    params: Any
    closed_loop_guard: Optional[Callable[[np.ndarray], float]] = None
    derived: dict = field(default_factory=dict)
    state_names: tuple = ()
    input_names: tuple = ()
    sampling_box: Optional[tuple] = None
    jump_sampling_box: Optional[tuple] = None
    discrete_dims: dict = field(default_factory=dict)
    growth_candidate: Optional[tuple] = None
    design: Any = None
