"""Problem description shared by the solvers."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from numpy.typing import NDArray

from .constraints import ControlPointBasis, DerivBounds, Polyhedron
from .objective import StageWeights
from .polyspline import SplineShape


@dataclass
class Problem:
    """Everything needed to pose one trajectory-generation instance.

    ``times`` are the fixed durations (fixed-time modes) or the initial
    allocation (joint mode).  ``corridor=None`` and ``bounds=None`` drop the
    respective constraint rows.
    """

    shape: SplineShape
    x0: NDArray
    weights: StageWeights
    corridor: list[Polyhedron] | None = None
    bounds: DerivBounds | None = None
    t_min: float = 0.1
    times: NDArray | None = None
    basis: ControlPointBasis = field(default_factory=ControlPointBasis)

    def __post_init__(self):
        s = self.shape
        self.x0 = np.asarray(self.x0, dtype=float).reshape(-1)
        if self.x0.size != s.state_dim:
            raise ValueError(f"x0: expected length {s.state_dim}, got {self.x0.size}")
        if self.weights.N != s.N or self.weights.Q_N.shape[0] != s.state_dim:
            raise ValueError("weights: stage count or state dimension does not match shape")
        if self.weights.eta.shape[1] != s.m:
            raise ValueError(f"weights.eta: expected {s.m} columns, got {self.weights.eta.shape[1]}")
        if self.corridor is not None:
            if len(self.corridor) != s.N:
                raise ValueError(f"corridor: expected {s.N} polyhedra, got {len(self.corridor)}")
            for k, P in enumerate(self.corridor):
                if P.dim != s.d:
                    raise ValueError(f"corridor[{k}]: polyhedron dimension {P.dim} != {s.d}")
        if not self.t_min > 0:
            raise ValueError(f"t_min must be positive, got {self.t_min}")
        if self.times is not None:
            self.times = np.asarray(self.times, dtype=float).reshape(-1)
            if self.times.size != s.N:
                raise ValueError(f"times: expected {s.N} durations, got {self.times.size}")
            if np.any(self.times <= 0):
                raise ValueError("times: durations must be positive")

    @property
    def N(self) -> int:
        return self.shape.N

    @property
    def has_constraints(self) -> bool:
        return self.corridor is not None or bool(self.bounds and self.bounds.orders(self.shape.m))

    def poly(self, k: int) -> Polyhedron | None:
        return None if self.corridor is None else self.corridor[k]

    def with_weights(self, weights: StageWeights) -> "Problem":
        return replace(self, weights=weights)

    def with_times(self, times) -> "Problem":
        return replace(self, times=np.asarray(times, dtype=float))
