"""Local Kalman filter and remote packet-drop estimator.

The local controller runs a standard Kalman filter on y_k = C x_k + v_k with
known inputs. The remote controller receives the local filtered estimate when
the uplink succeeds (eta_k = 1) and otherwise propagates its own prediction,
which uses only the stacked control U (the local correction u_tilde has zero
conditional mean given remote information). Error covariances are control
independent, so the whole schedule is precomputable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._linalg import psd_pinv, spectral_radius, sym
from .errors import Diverged
from .model import ValidatedModel

STATIONARY_TOL = 1e-10
STATIONARY_MAX_ITER = 100_000


@dataclass
class EstimatorState:
    """Local/remote conditional means at one step.

    `k` indexes the most recent measurement update; after a successful
    transmission xhat_remote equals xhat_local exactly.
    """

    xhat_local: np.ndarray
    xhat_local_pred: np.ndarray
    xhat_remote: np.ndarray
    xhat_remote_pred: np.ndarray
    k: int


@dataclass(frozen=True)
class CovarianceSchedule:
    """Prediction/filtered covariances and Kalman gains for steps 0..N+1."""

    Sigma_pred: np.ndarray   # (N+2, n, n), Sigma^L_{k|k-1}
    Sigma_filt: np.ndarray   # (N+2, n, n), Sigma^L_{k|k}
    W: np.ndarray            # (N+2, n, q)

    def __len__(self) -> int:
        return self.Sigma_pred.shape[0]

    def delta(self, k: int) -> np.ndarray:
        """Innovation-update covariance Sigma_pred[k] - Sigma_filt[k]."""
        return self.Sigma_pred[k] - self.Sigma_filt[k]


def covariance_schedule(model: ValidatedModel, N: int) -> CovarianceSchedule:
    """Run the filter covariance recursion for steps 0..N+1.

    Prediction: Sigma_pred[k] = A Sigma_filt[k-1] A' + Q_w, starting from
    Sigma_init. Gain: W_k = Sigma_pred C' (C Sigma_pred C' + Q_v)^+, with the
    pseudo-inverse handling exactly-degenerate innovation directions (zero
    variance means zero correction is the right conditional expectation).
    Update in Joseph form, which keeps every iterate PSD.
    """
    if N < 0:
        raise ValueError("horizon N must be nonnegative")
    n, q = model.n, model.q
    A, C, Q_w, Q_v = model.A, model.C, model.Q_w, model.Q_v
    I = np.eye(n)
    Sigma_pred = np.empty((N + 2, n, n))
    Sigma_filt = np.empty((N + 2, n, n))
    W = np.empty((N + 2, n, q))
    P = model.Sigma_init.copy()
    for k in range(N + 2):
        Sigma_pred[k] = P
        innov = sym(C @ P @ C.T + Q_v)
        Wk = P @ C.T @ psd_pinv(innov, name=f"innovation covariance at step {k}")
        IWC = I - Wk @ C
        Pf = sym(IWC @ P @ IWC.T + Wk @ Q_v @ Wk.T)
        Sigma_filt[k] = Pf
        W[k] = Wk
        P = sym(A @ Pf @ A.T + Q_w)
    return CovarianceSchedule(Sigma_pred=Sigma_pred, Sigma_filt=Sigma_filt, W=W)


def initial_state(model: ValidatedModel) -> EstimatorState:
    """Estimator state before the step-0 measurement: all means at x0_mean."""
    x0 = model.x0_mean.copy()
    return EstimatorState(
        xhat_local=x0.copy(), xhat_local_pred=x0.copy(),
        xhat_remote=x0.copy(), xhat_remote_pred=x0.copy(), k=-1,
    )


def local_filter_step(
    model: ValidatedModel,
    state: EstimatorState,
    schedule: CovarianceSchedule,
    y: np.ndarray,
    U_prev: np.ndarray | None = None,
    u_tilde_prev: np.ndarray | None = None,
) -> EstimatorState:
    """Advance the local estimate one step and apply the measurement update.

    The local predictor uses the full applied control, B U_{k-1} plus
    B_local u_tilde_{k-1}; at k=0 (no previous control) the prediction is the
    prior mean. Returns a new state at k = state.k + 1 whose remote fields are
    not yet advanced (see remote_estimator_step).
    """
    k = state.k + 1
    if k == 0 or U_prev is None:
        pred = state.xhat_local_pred.copy() if k == 0 else model.A @ state.xhat_local
    else:
        pred = model.A @ state.xhat_local + model.B @ U_prev
        if u_tilde_prev is not None:
            pred = pred + model.B_local @ u_tilde_prev
    Wk = schedule.W[k]
    filt = pred + Wk @ (y - model.C @ pred)
    return EstimatorState(
        xhat_local=filt, xhat_local_pred=pred,
        xhat_remote=state.xhat_remote, xhat_remote_pred=state.xhat_remote_pred,
        k=k,
    )


def remote_estimator_step(
    model: ValidatedModel,
    state: EstimatorState,
    eta: int,
    U_prev: np.ndarray | None = None,
) -> EstimatorState:
    """Advance the remote estimate for the step the local filter just did.

    Remote prediction uses only the stacked control U (never u_tilde, which is
    unknown to the remote side). On success (eta=1) the remote copies the
    local filtered mean; on failure it keeps its prediction.
    """
    if state.k == 0 or U_prev is None:
        pred = state.xhat_remote.copy() if state.k == 0 else model.A @ state.xhat_remote
    else:
        pred = model.A @ state.xhat_remote + model.B @ U_prev
    filt = state.xhat_local.copy() if eta else pred.copy()
    return EstimatorState(
        xhat_local=state.xhat_local, xhat_local_pred=state.xhat_local_pred,
        xhat_remote=filt, xhat_remote_pred=pred,
        k=state.k,
    )


def stationary_filter_covariance(model: ValidatedModel) -> dict:
    """Fixed point of the filter covariance recursion (prediction form).

    Iterates until successive prediction covariances differ by less than
    STATIONARY_TOL in max norm. Returns the limiting prediction/filtered
    covariances, the gain, and the update covariance delta.
    """
    n = model.n
    A, C, Q_w, Q_v = model.A, model.C, model.Q_w, model.Q_v
    I = np.eye(n)
    P = model.Sigma_init.copy()
    for iteration in range(STATIONARY_MAX_ITER):
        innov = sym(C @ P @ C.T + Q_v)
        Wk = P @ C.T @ psd_pinv(innov, name="innovation covariance")
        IWC = I - Wk @ C
        Pf = sym(IWC @ P @ IWC.T + Wk @ Q_v @ Wk.T)
        P_next = sym(A @ Pf @ A.T + Q_w)
        if np.abs(P_next - P).max() < STATIONARY_TOL * (1.0 + np.abs(P).max()):
            return {
                "Sigma_pred": P_next, "Sigma_filt": Pf, "W": Wk,
                "delta": P_next - Pf, "iterations": iteration + 1, "converged": True,
            }
        if not np.all(np.isfinite(P_next)) or np.abs(P_next).max() > 1e14:
            raise Diverged("filter covariance iteration diverged")
        P = P_next
    return {
        "Sigma_pred": P, "Sigma_filt": Pf, "W": Wk,
        "delta": P - Pf, "iterations": STATIONARY_MAX_ITER, "converged": False,
    }


def remote_covariance_assessment(model: ValidatedModel, stationary_gains) -> dict:
    """Asymptotics of the remote estimation-error covariance.

    The remote error exceeds the local error by the covariance of the gap
    d_k = xhat_local - xhat_remote, which on drop steps evolves through
    A - B_local (local_gain). Convergence criterion:

        sqrt(p) * |lambda_max(A - B_local @ local_gain)| < 1.

    When it holds, the limit Sigma_R is computed by iterating the gap
    covariance to its fixed point on top of the stationary filter covariance.
    Returns {converges, spectral_value, Sigma_R_limit}.
    """
    F = np.asarray(stationary_gains.local_gain, dtype=float)
    A_F = model.A - model.B_local @ F
    spectral_value = float(np.sqrt(model.p)) * spectral_radius(A_F)
    result = {"converges": spectral_value < 1.0, "spectral_value": spectral_value,
              "Sigma_R_limit": None}
    if not result["converges"]:
        return result
    filt = stationary_filter_covariance(model)
    delta = filt["delta"]
    p = model.p
    Pd = p * delta
    for _ in range(STATIONARY_MAX_ITER):
        Pd_next = sym(p * (A_F @ Pd @ A_F.T + delta))
        if np.abs(Pd_next - Pd).max() < STATIONARY_TOL * (1.0 + np.abs(Pd).max()):
            Pd = Pd_next
            break
        Pd = Pd_next
    result["Sigma_R_limit"] = sym(filt["Sigma_filt"] + Pd)
    return result
