"""Solver output containers."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from numpy.typing import NDArray

from .polyspline import PiecewiseTrajectory


class Status(str, Enum):
    CONVERGED = "Converged"
    MAX_ITER = "MaxIter"
    LINE_SEARCH_FAIL = "LineSearchFail"
    REGULARIZATION_FAIL = "RegularizationFail"
    INFEASIBLE_INPUT = "InfeasibleInput"


@dataclass
class IterateTrace:
    """One entry per iteration (accepted step or barrier update)."""

    cost: list = field(default_factory=list)
    stationarity: list = field(default_factory=list)
    violation: list = field(default_factory=list)
    min_slack: list = field(default_factory=list)
    mu: list = field(default_factory=list)
    step: list = field(default_factory=list)
    reg: list = field(default_factory=list)

    def append(self, **row):
        for key, val in row.items():
            getattr(self, key).append(float(val))

    def __len__(self):
        return len(self.cost)

    def rows(self):
        keys = ("cost", "stationarity", "violation", "min_slack", "mu", "step", "reg")
        return [dict(zip(keys, vals)) for vals in zip(*(getattr(self, k) for k in keys))]


@dataclass
class SolveResult:
    trajectory: PiecewiseTrajectory | None
    states: NDArray
    v: NDArray
    durations: NDArray
    duals: list
    status: Status
    trace: IterateTrace
    cost_breakdown: dict
    iterations: int = 0
    mu: float = 0.0
    message: str = ""
    stages: list = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return self.status == Status.CONVERGED

    @property
    def cost(self) -> float:
        return float(self.cost_breakdown.get("total", np.nan))
