"""Optimal control laws assembled from Riccati gains and estimator output.

The stacked control is U_k = -K_k xhat^R_{k|k} - Kbar_k E[x_k]; the remote
controller applies its block of U, the local controller applies its block
plus the correction u_tilde_k = -local_gain_k (xhat^L_{k|k} - xhat^R_{k|k}).
The mean path E[x_k] is deterministic and propagated analytically, which
keeps the mean-feedback term free of sampling noise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .estimation import EstimatorState
from .model import ValidatedModel
from .riccati import GainSet, RiccatiSolution


@dataclass(frozen=True)
class MeanState:
    """Deterministic mean of the state and stacked control at one step."""

    Ex: np.ndarray
    EU: np.ndarray
    k: int


@dataclass(frozen=True)
class ControlAction:
    """Controls applied at one step, with the stacked and correction parts."""

    u_local: np.ndarray
    u_remote: np.ndarray
    U: np.ndarray
    u_tilde: np.ndarray


def control_action(gains: GainSet, est: EstimatorState, mean: MeanState,
                   m1: int | None = None) -> ControlAction:
    """Evaluate both control laws at the current estimates.

    The remote block depends only on xhat_remote and the mean path, never on
    the raw local estimate, matching the remote information set. m1 defaults
    to the width of the local gain.
    """
    if m1 is None:
        m1 = gains.local_gain.shape[0]
    U = -(gains.K @ est.xhat_remote) - gains.Kbar @ mean.Ex
    u_tilde = -(gains.local_gain @ (est.xhat_local - est.xhat_remote))
    return ControlAction(
        u_local=U[:m1] + u_tilde,
        u_remote=U[m1:],
        U=U,
        u_tilde=u_tilde,
    )


def mean_propagate(model: ValidatedModel, gains: list[GainSet],
                   x0_mean: np.ndarray | None = None) -> list[MeanState]:
    """Forward pass of the deterministic mean recursion.

    Ex_{k+1} = A Ex_k + B EU_k with EU_k = -(K_k + Kbar_k) Ex_k (the local
    correction has zero mean). Returns states for k = 0..N+1; the terminal
    entry carries a zero EU since no control is applied there.
    """
    Ex = model.x0_mean.copy() if x0_mean is None else np.asarray(x0_mean, dtype=float).copy()
    out: list[MeanState] = []
    for k, g in enumerate(gains):
        EU = -((g.K + g.Kbar) @ Ex)
        out.append(MeanState(Ex=Ex, EU=EU, k=k))
        Ex = model.A @ Ex + model.B @ EU
    out.append(MeanState(Ex=Ex, EU=np.zeros(model.m1 + model.m2), k=len(gains)))
    return out


def mean_path(model: ValidatedModel, solution: RiccatiSolution,
              x0_mean: np.ndarray | None = None) -> np.ndarray:
    """Stacked (N+2, n) array of mean states under the optimal policy."""
    states = mean_propagate(model, solution.gains, x0_mean)
    return np.stack([s.Ex for s in states])


def completed_square_penalties(gains: GainSet, est: EstimatorState,
                               mean: MeanState, action: ControlAction) -> dict:
    """The three quadratic penalty residuals from the optimality argument.

    Each vanishes identically at the optimal policy: the stacked deviation
    penalty U - EU + K (xhat^R - Ex), the mean penalty EU + (K + Kbar) Ex,
    and the correction penalty u_tilde + local_gain (xhat^L - xhat^R).
    """
    dev = action.U - mean.EU + gains.K @ (est.xhat_remote - mean.Ex)
    mean_res = mean.EU + (gains.K + gains.Kbar) @ mean.Ex
    corr = action.u_tilde + gains.local_gain @ (est.xhat_local - est.xhat_remote)
    return {"deviation": dev, "mean": mean_res, "correction": corr}
