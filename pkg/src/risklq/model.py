"""Problem instance definition and validation.

The plant is

    x_{k+1} = A x_k + B^L u^L_k + B^R u^R_k + w_k,
    y_k     = C x_k + v_k,

with a local controller that sees y_k and a remote controller that receives
the local state estimate over a Bernoulli uplink failing with probability p.
Cost is quadratic over a finite horizon; the risk constraint bounds the
cumulative state weighted variance sum_k E(x_k - Ex_k)' Q_risk (x_k - Ex_k)
by epsilon.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from ._linalg import is_pd, is_psd, psd_factor, sym
from .errors import DimensionMismatch, NotPD, NotPSD, ProbabilityOutOfRange

SYM_TOL = 1e-9

_MATRIX_FIELDS = (
    "A", "B_local", "B_remote", "C", "Q_w", "Q_v", "Q", "Q_risk",
    "R_local", "R_remote", "G", "Sigma_init",
)
_PSD_FIELDS = ("Q", "Q_risk", "G", "Q_w", "Q_v", "Sigma_init")
_PD_FIELDS = ("R_local", "R_remote")


@dataclass(frozen=True, eq=False)
class SystemModel:
    """Plant, channel, noise, cost, and risk-constraint data."""

    A: np.ndarray
    B_local: np.ndarray
    B_remote: np.ndarray
    C: np.ndarray
    Q_w: np.ndarray
    Q_v: np.ndarray
    Q: np.ndarray
    R_local: np.ndarray
    R_remote: np.ndarray
    G: np.ndarray
    p: float
    x0_mean: np.ndarray
    Sigma_init: np.ndarray
    Q_risk: np.ndarray = None  # defaults to Q
    epsilon: float = 0.0

    def __post_init__(self):
        if self.Q_risk is None:
            object.__setattr__(self, "Q_risk", self.Q)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m1(self) -> int:
        return self.B_local.shape[1]

    @property
    def m2(self) -> int:
        return self.B_remote.shape[1]

    @property
    def q(self) -> int:
        return self.C.shape[0]


@dataclass(frozen=True, eq=False)
class ValidatedModel(SystemModel):
    """A SystemModel that passed validation, with stacked forms precomputed."""

    B: np.ndarray = None        # [B_local | B_remote]
    R: np.ndarray = None        # blockdiag(R_local, R_remote)
    detectable: bool = False    # (A, C) detectability, PBH test
    observable: bool = False    # (A, [Q^1/2; Q_risk^1/2]) observability


@dataclass(frozen=True, eq=False)
class StackedInputModel:
    """Stacked input map B = [B^L B^R] and block-diagonal weight R."""

    B: np.ndarray
    R: np.ndarray


def _as_matrix(name: str, value, rows: int | None = None, cols: int | None = None) -> np.ndarray:
    M = np.asarray(value, dtype=float)
    if M.ndim != 2:
        raise DimensionMismatch(f"{name} must be a 2-d matrix, got shape {M.shape}")
    if rows is not None and M.shape[0] != rows:
        raise DimensionMismatch(f"{name} must have {rows} rows, got {M.shape[0]}")
    if cols is not None and M.shape[1] != cols:
        raise DimensionMismatch(f"{name} must have {cols} columns, got {M.shape[1]}")
    return M


def _symmetrized(name: str, M: np.ndarray) -> np.ndarray:
    scale = 1.0 + float(np.abs(M).max(initial=0.0))
    gap = float(np.abs(M - M.T).max(initial=0.0))
    if gap > SYM_TOL * scale:
        raise NotPSD(name, detail=f"{name} is asymmetric beyond tolerance (max gap {gap:.3e})")
    return sym(M)


def _detectable(A: np.ndarray, C: np.ndarray) -> bool:
    """PBH test: every eigenvalue on or outside the unit circle is observable."""
    n = A.shape[0]
    for lam in np.linalg.eigvals(A):
        if abs(lam) < 1.0 - 1e-9:
            continue
        M = np.vstack([A - lam * np.eye(n), C])
        if np.linalg.matrix_rank(M, tol=1e-9 * (1.0 + abs(lam))) < n:
            return False
    return True


def _observable(A: np.ndarray, H: np.ndarray) -> bool:
    n = A.shape[0]
    blocks = [H]
    for _ in range(n - 1):
        blocks.append(blocks[-1] @ A)
    return np.linalg.matrix_rank(np.vstack(blocks)) == n


def validate(model: SystemModel) -> ValidatedModel:
    """Check dimensions, symmetry, definiteness, and probability bounds.

    Symmetric inputs are symmetrized within tolerance; the weight matrices are
    eigenvalue-tested (cost and covariance weights PSD, input weights strictly
    PD since every gain formula inverts an input-weighted matrix). Records
    detectability of (A, C) and observability of (A, [Q^1/2; Q_risk^1/2]).
    Idempotent: validating a ValidatedModel returns an equal model.
    """
    A = _as_matrix("A", model.A)
    n = A.shape[0]
    if A.shape[1] != n:
        raise DimensionMismatch(f"A must be square, got shape {A.shape}")
    B_local = _as_matrix("B_local", model.B_local, rows=n)
    B_remote = _as_matrix("B_remote", model.B_remote, rows=n)
    C = _as_matrix("C", model.C, cols=n)
    q = C.shape[0]
    m1 = B_local.shape[1]
    m2 = B_remote.shape[1]
    if m1 == 0 or m2 == 0 or q == 0:
        raise DimensionMismatch("each controller needs an input and the local "
                                "side a measurement; got widths "
                                f"m1={m1}, m2={m2}, q={q}")

    raw = {
        "Q_w": _as_matrix("Q_w", model.Q_w, n, n),
        "Q_v": _as_matrix("Q_v", model.Q_v, q, q),
        "Q": _as_matrix("Q", model.Q, n, n),
        "Q_risk": _as_matrix("Q_risk", model.Q_risk, n, n),
        "R_local": _as_matrix("R_local", model.R_local, m1, m1),
        "R_remote": _as_matrix("R_remote", model.R_remote, m2, m2),
        "G": _as_matrix("G", model.G, n, n),
        "Sigma_init": _as_matrix("Sigma_init", model.Sigma_init, n, n),
    }
    fixed = {name: _symmetrized(name, M) for name, M in raw.items()}

    for name in _PSD_FIELDS:
        ok, lo = is_psd(fixed[name])
        if not ok:
            raise NotPSD(name, lo)
    for name in _PD_FIELDS:
        ok, lo = is_pd(fixed[name])
        if not ok:
            raise NotPD(name, lo)

    p = float(model.p)
    if not 0.0 <= p <= 1.0:
        raise ProbabilityOutOfRange(f"p must lie in [0, 1], got {p}")
    epsilon = float(model.epsilon)
    if epsilon < 0.0:
        raise ValueError(f"epsilon must be nonnegative, got {epsilon}")

    x0_mean = np.asarray(model.x0_mean, dtype=float).reshape(-1)
    if x0_mean.shape != (n,):
        raise DimensionMismatch(f"x0_mean must have length {n}, got {x0_mean.shape}")

    B = np.hstack([B_local, B_remote])
    R = np.zeros((m1 + m2, m1 + m2))
    R[:m1, :m1] = fixed["R_local"]
    R[m1:, m1:] = fixed["R_remote"]

    risk_rows = np.vstack([psd_factor(fixed["Q"], "Q"), psd_factor(fixed["Q_risk"], "Q_risk")])
    return ValidatedModel(
        A=A, B_local=B_local, B_remote=B_remote, C=C,
        Q_w=fixed["Q_w"], Q_v=fixed["Q_v"], Q=fixed["Q"], Q_risk=fixed["Q_risk"],
        R_local=fixed["R_local"], R_remote=fixed["R_remote"], G=fixed["G"],
        p=p, x0_mean=x0_mean, Sigma_init=fixed["Sigma_init"], epsilon=epsilon,
        B=B, R=R,
        detectable=_detectable(A, C),
        observable=_observable(A, risk_rows),
    )


def stack_inputs(model: ValidatedModel) -> StackedInputModel:
    """Stacked-input view: B = [B_local | B_remote], R = diag(R_local, R_remote)."""
    if not isinstance(model, ValidatedModel):
        model = validate(model)
    return StackedInputModel(B=model.B.copy(), R=model.R.copy())


def with_epsilon(model: ValidatedModel, epsilon: float) -> ValidatedModel:
    """Copy of the model with a different risk budget."""
    if epsilon < 0.0:
        raise ValueError(f"epsilon must be nonnegative, got {epsilon}")
    return replace(model, epsilon=float(epsilon))


def model_from_dict(data: dict) -> SystemModel:
    """Build a SystemModel from a configuration dictionary.

    Matrices are row-major nested arrays. `Q_risk` defaults to `Q`;
    `x0_mean` defaults to zeros; `epsilon` defaults to 0. Unknown keys other
    than `name`/`description` are rejected to catch typos.
    """
    known = set(_MATRIX_FIELDS) | {"p", "x0_mean", "epsilon", "name", "description"}
    unknown = set(data) - known
    if unknown:
        raise KeyError(f"unknown model config keys: {sorted(unknown)}")
    required = ["A", "B_local", "B_remote", "C", "Q_w", "Q_v", "Q",
                "R_local", "R_remote", "G", "p"]
    missing = [key for key in required if key not in data]
    if missing:
        raise KeyError(f"missing model config keys: {missing}")

    A = np.asarray(data["A"], dtype=float)
    n = A.shape[0] if A.ndim == 2 else 0
    x0_mean = np.asarray(data.get("x0_mean", np.zeros(n)), dtype=float)
    Sigma_init = np.asarray(data.get("Sigma_init", np.zeros((n, n))), dtype=float)
    return SystemModel(
        A=A,
        B_local=np.asarray(data["B_local"], dtype=float),
        B_remote=np.asarray(data["B_remote"], dtype=float),
        C=np.asarray(data["C"], dtype=float),
        Q_w=np.asarray(data["Q_w"], dtype=float),
        Q_v=np.asarray(data["Q_v"], dtype=float),
        Q=np.asarray(data["Q"], dtype=float),
        Q_risk=None if "Q_risk" not in data else np.asarray(data["Q_risk"], dtype=float),
        R_local=np.asarray(data["R_local"], dtype=float),
        R_remote=np.asarray(data["R_remote"], dtype=float),
        G=np.asarray(data["G"], dtype=float),
        p=float(data["p"]),
        x0_mean=x0_mean,
        Sigma_init=Sigma_init,
        epsilon=float(data.get("epsilon", 0.0)),
    )


def load_model(path: str | Path) -> SystemModel:
    """Load a SystemModel from a JSON config file."""
    with open(path) as fh:
        return model_from_dict(json.load(fh))


def model_to_dict(model: SystemModel) -> dict:
    """Serialize a model to a JSON-compatible dictionary."""
    return {
        "A": model.A.tolist(),
        "B_local": model.B_local.tolist(),
        "B_remote": model.B_remote.tolist(),
        "C": model.C.tolist(),
        "Q_w": model.Q_w.tolist(),
        "Q_v": model.Q_v.tolist(),
        "Q": model.Q.tolist(),
        "Q_risk": model.Q_risk.tolist(),
        "R_local": model.R_local.tolist(),
        "R_remote": model.R_remote.tolist(),
        "G": model.G.tolist(),
        "p": model.p,
        "x0_mean": model.x0_mean.tolist(),
        "Sigma_init": model.Sigma_init.tolist(),
        "epsilon": model.epsilon,
    }
