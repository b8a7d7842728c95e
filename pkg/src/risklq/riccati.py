"""Coupled Riccati recursions for the risk-penalized decentralized problem.

For a fixed multiplier mu >= 0, write Q_mu = Q + mu Q_risk and
G_mu = G + mu Q_risk. Three coupled sequences run backward from
Z_{N+1} = X_{N+1} = G_mu, S_{N+1} = -mu Q_risk:

    Upsilon_k = B' Z_{k+1} B + R          K_k = Upsilon_k^{-1} B' Z_{k+1} A
    M_k  = B' (Z_{k+1}+S_{k+1}) B + R     N_k = B' (Z_{k+1}+S_{k+1}) A
    Kbar_k = M_k^{-1} N_k - K_k
    Theta_{k+1} = (1-p) Z_{k+1} + p X_{k+1}
    Lambda_k = B_local' Theta_{k+1} B_local + R_local
    L_k = B_local' Theta_{k+1} A

    Z_k = A' Z_{k+1} A + Q_mu - K_k' Upsilon_k K_k
    X_k = A' Theta_{k+1} A + Q_mu - L_k' Lambda_k^{-1} L_k
    S_k = A' S_{k+1} A - mu Q_risk + K_k' Upsilon_k K_k - N_k' M_k^{-1} N_k

A unique optimal policy exists iff Upsilon_k, M_k, Lambda_k are positive
definite at every step. Z drives the remote state feedback, Theta the local
correction, Z+S the mean feedback; Z+S also satisfies the standard
risk-free Riccati recursion for (Q, R, G), so the mean feedback K + Kbar is
independent of mu.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._linalg import is_pd, spd_solve, sym
from .errors import Diverged, NotSolvable
from .estimation import remote_covariance_assessment
from .model import ValidatedModel

DIVERGENCE_CAP = 1e14


@dataclass(frozen=True)
class GainSet:
    """Per-step gain matrices derived from (Z_{k+1}, S_{k+1}, Theta_{k+1})."""

    Upsilon: np.ndarray      # (m1+m2) x (m1+m2)
    K: np.ndarray            # (m1+m2) x n, remote-estimate feedback
    Kbar: np.ndarray         # (m1+m2) x n, mean feedback correction
    M: np.ndarray            # (m1+m2) x (m1+m2)
    Nmat: np.ndarray         # (m1+m2) x n
    Lambda: np.ndarray       # m1 x m1
    L: np.ndarray            # m1 x n
    local_gain: np.ndarray   # m1 x n, equals Lambda^{-1} L


@dataclass(frozen=True)
class RiccatiSolution:
    """Backward solution over steps 0..N+1 with gains for steps 0..N."""

    Z: np.ndarray            # (N+2, n, n)
    X: np.ndarray            # (N+2, n, n)
    S: np.ndarray            # (N+2, n, n)
    Theta: np.ndarray        # (N+2, n, n)
    gains: list[GainSet]
    mu: float
    solvable: bool

    @property
    def N(self) -> int:
        return len(self.gains) - 1


@dataclass(frozen=True)
class StationarySolution:
    """Fixed point of the backward recursion with boundedness certificates."""

    Z: np.ndarray
    X: np.ndarray
    S: np.ndarray
    Theta: np.ndarray
    gains: GainSet
    converged: bool
    iterations: int
    ms_bounded: bool
    spectral_value: float
    positivity: dict = field(default_factory=dict)


def _gain_step(model: ValidatedModel, Z1: np.ndarray, S1: np.ndarray,
               Theta1: np.ndarray, k: int) -> GainSet:
    # positive definiteness is certified by the Cholesky inside spd_solve;
    # an eigenvalue pre-test with a relative floor would wrongly reject
    # well-posed but ill-conditioned steps (large mu makes Upsilon stiff)
    A, B, BL, R, RL = model.A, model.B, model.B_local, model.R, model.R_local
    Upsilon = sym(B.T @ Z1 @ B + R)
    K = spd_solve(Upsilon, B.T @ Z1 @ A, k, "Upsilon")
    ZS = Z1 + S1
    M = sym(B.T @ ZS @ B + R)
    Nmat = B.T @ ZS @ A
    Kbar = spd_solve(M, Nmat, k, "M") - K
    Lambda = sym(BL.T @ Theta1 @ BL + RL)
    L = BL.T @ Theta1 @ A
    local_gain = spd_solve(Lambda, L, k, "Lambda")
    return GainSet(Upsilon=Upsilon, K=K, Kbar=Kbar, M=M, Nmat=Nmat,
                   Lambda=Lambda, L=L, local_gain=local_gain)


def _riccati_step(model: ValidatedModel, Z1, X1, S1, mu: float, k: int):
    """One backward step: returns (Z_k, X_k, S_k, Theta_k-free gains)."""
    A = model.A
    Q_mu = model.Q + mu * model.Q_risk
    Theta1 = sym((1.0 - model.p) * Z1 + model.p * X1)
    g = _gain_step(model, Z1, S1, Theta1, k)
    Z0 = sym(A.T @ Z1 @ A + Q_mu - g.K.T @ g.Upsilon @ g.K)
    X0 = sym(A.T @ Theta1 @ A + Q_mu - g.L.T @ g.local_gain)
    S0 = sym(A.T @ S1 @ A - mu * model.Q_risk
             + g.K.T @ g.Upsilon @ g.K - g.Nmat.T @ spd_solve(g.M, g.Nmat, k, "M"))
    return Z0, X0, S0, g


def solve_finite(model: ValidatedModel, mu: float, N: int) -> RiccatiSolution:
    """Solve the three coupled recursions backward from k = N to 0.

    Raises NotSolvable(k, name) as soon as one of Upsilon_k, M_k, Lambda_k
    fails strict positive definiteness; there is no pseudo-inverse fallback
    because invertibility is exactly the uniqueness condition.
    """
    if mu < 0:
        raise ValueError(f"mu must be nonnegative, got {mu}")
    if N < 0:
        raise ValueError(f"horizon N must be nonnegative, got {N}")
    n = model.n
    G_mu = sym(model.G + mu * model.Q_risk)
    Z = np.empty((N + 2, n, n))
    X = np.empty((N + 2, n, n))
    S = np.empty((N + 2, n, n))
    Z[N + 1] = G_mu
    X[N + 1] = G_mu
    S[N + 1] = -mu * model.Q_risk
    gains: list[GainSet | None] = [None] * (N + 1)
    for k in range(N, -1, -1):
        Z[k], X[k], S[k], gains[k] = _riccati_step(model, Z[k + 1], X[k + 1], S[k + 1], mu, k)
    # Z[k], X[k] are symmetric slice by slice, so their convex mix is too.
    Theta = (1.0 - model.p) * Z + model.p * X
    return RiccatiSolution(Z=Z, X=X, S=S, Theta=Theta, gains=list(gains),
                           mu=float(mu), solvable=True)


def solve_stationary(
    model: ValidatedModel,
    mu: float,
    tol: float = 1e-10,
    max_iter: int = 100_000,
) -> StationarySolution:
    """Iterate the backward recursion from its terminal values to a fixed point.

    Stops when successive (Z, X, S) change by less than tol in max norm.
    On convergence, checks Z > 0, Z + S > 0, Theta > 0 and the remote
    covariance criterion sqrt(p) * rho(A - B_local local_gain) < 1;
    ms_bounded is the conjunction of all four.
    """
    if mu < 0:
        raise ValueError(f"mu must be nonnegative, got {mu}")
    G_mu = sym(model.G + mu * model.Q_risk)
    Z1, X1, S1 = G_mu.copy(), G_mu.copy(), sym(-mu * model.Q_risk)
    converged = False
    iterations = 0
    for iteration in range(1, max_iter + 1):
        try:
            Z0, X0, S0, g = _riccati_step(model, Z1, X1, S1, mu, k=-iteration)
        except NotSolvable as exc:
            raise NotSolvable(iteration, exc.which_matrix) from exc
        scale = 1.0 + max(np.abs(Z1).max(), np.abs(X1).max(), np.abs(S1).max())
        gap = max(np.abs(Z0 - Z1).max(), np.abs(X0 - X1).max(), np.abs(S0 - S1).max())
        Z1, X1, S1 = Z0, X0, S0
        iterations = iteration
        if gap < tol * scale:
            converged = True
            break
        if not np.all(np.isfinite(Z0)) or max(np.abs(Z0).max(), np.abs(X0).max()) > DIVERGENCE_CAP:
            raise Diverged(f"stationary Riccati iteration diverged after {iteration} steps")

    Theta = sym((1.0 - model.p) * Z1 + model.p * X1)
    gains = _gain_step(model, Z1, S1, Theta, k=-1)
    pos = {
        "Z": is_pd(Z1)[0],
        "Z_plus_S": is_pd(Z1 + S1)[0],
        "Theta": is_pd(Theta)[0],
    }
    assessment = remote_covariance_assessment(model, gains)
    spectral_value = assessment["spectral_value"]
    ms_bounded = bool(converged and all(pos.values()) and assessment["converges"])
    return StationarySolution(
        Z=Z1, X=X1, S=S1, Theta=Theta, gains=gains,
        converged=converged, iterations=iterations,
        ms_bounded=ms_bounded, spectral_value=spectral_value,
        positivity=pos,
    )
