"""IRT-based transforms of positive-feature vectors.

Four transforms of a binary usage vector g over calibrated items (a_j, b_j)
and a writer ability estimate:

    multiply_b      g'_j = g_j * b_j
    prob            g'_j = P_j(theta)
    multiply_prob   g'_j = g_j * P_j(theta)
    add_prob        g'_j = alpha * g_j + (1 - alpha) * P_j(theta)

Items dropped from calibration have no usable parameters: they pass
through as g_j for the multiplicative modes and contribute the
maximum-entropy probability 0.5 for the probability modes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .irt import AbilityEstimate, ItemParameters, irf
from .profiler import PFVector

MODES = ("identity", "multiply_b", "prob", "multiply_prob", "add_prob")
PROB_MODES = ("prob", "multiply_prob", "add_prob")


@dataclass(frozen=True)
class TransformSpec:
    mode: str = "identity"
    alpha: float = 0.5
    D: float = 1.0

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"unknown transform mode '{self.mode}'")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")


def apply_transform(
    g: PFVector,
    items: list[ItemParameters] | None,
    theta: AbilityEstimate | None,
    spec: TransformSpec,
) -> np.ndarray:
    """Apply one transform to a binary usage vector; returns a K-vector."""
    values = np.asarray(g.values, dtype=np.float64)
    if spec.mode == "identity":
        return values.copy()
    if items is None or len(items) != len(values):
        raise ValueError(
            f"need one ItemParameters per feature: {len(values)} features vs "
            f"{0 if items is None else len(items)} items"
        )
    if not g.binary:
        raise ValueError("transforms are defined on binary usage vectors")
    calibrated = np.array([item.calibrated for item in items])
    if spec.mode == "multiply_b":
        b = np.array([item.b for item in items])
        return np.where(calibrated, values * b, values)
    if theta is None:
        raise ValueError(f"mode '{spec.mode}' requires an ability estimate")
    p = np.array(
        [
            irf(theta.theta, item, D=spec.D) if item.calibrated else 0.5
            for item in items
        ]
    )
    if spec.mode == "prob":
        return p
    if spec.mode == "multiply_prob":
        # dropped items keep their raw indicator instead of being halved
        return np.where(calibrated, values * p, values)
    return spec.alpha * values + (1.0 - spec.alpha) * p
