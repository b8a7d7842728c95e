"""Seeded Monte Carlo simulation of the closed-loop networked system.

Each trajectory owns a child seed spawned from the master seed, and draws its
entire noise block in one fixed order (x0, process noises, measurement
noises, channel uniforms) before the dynamics run. Trajectories are therefore
independent and order-insensitive, and every statistic is bit-reproducible
for a fixed master seed regardless of worker count: work is split into
fixed-size chunks and reduced in chunk order.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ._linalg import psd_factor
from .model import ValidatedModel
from .policy import mean_propagate
from .riccati import GainSet, RiccatiSolution, StationarySolution

CHUNK = 4096

_KINDS = ("gaussian", "scaled_student_t", "shifted_exponential")


@dataclass(frozen=True)
class NoiseSpec:
    """Zero-mean i.i.d. noise with an exact covariance and a chosen shape.

    gaussian draws standard normals; scaled_student_t draws Student-t with
    df > 2 scaled by sqrt((df-2)/df) so each coordinate has unit variance;
    shifted_exponential draws Exp(1) - 1 (standardized, so the rate parameter
    is cosmetic). A symmetric PSD factor of `covariance` then colors the
    draw, making the covariance exact for every kind.
    """

    kind: str
    covariance: np.ndarray
    df: float | None = None
    rate: float | None = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}; choose from {_KINDS}")
        if self.kind == "scaled_student_t":
            if self.df is None or self.df <= 2:
                raise ValueError("scaled_student_t requires df > 2 for a finite covariance")
        object.__setattr__(self, "covariance", np.asarray(self.covariance, dtype=float))

    def factor(self) -> np.ndarray:
        return psd_factor(self.covariance, "noise covariance")

    def draw_standard(self, rng: np.random.Generator, size: tuple) -> np.ndarray:
        """Unit-variance, zero-mean draws before coloring."""
        if self.kind == "gaussian":
            return rng.standard_normal(size)
        if self.kind == "scaled_student_t":
            return rng.standard_t(self.df, size) * np.sqrt((self.df - 2.0) / self.df)
        return rng.standard_exponential(size) - 1.0


@dataclass
class Trajectory:
    """One closed-loop sample path with everything needed to replay it."""

    x: np.ndarray            # (N+2, n)
    y: np.ndarray            # (N+1, q)
    eta: np.ndarray          # (N+1,) channel bits, 1 = delivered
    u_local: np.ndarray      # (N+1, m1)
    u_remote: np.ndarray     # (N+1, m2)
    u_tilde: np.ndarray      # (N+1, m1)
    U: np.ndarray            # (N+1, m1+m2)
    xhat_local: np.ndarray   # (N+1, n) filtered local estimates
    xhat_remote: np.ndarray  # (N+1, n) filtered remote estimates
    w: np.ndarray            # (N+1, n) recorded process noise
    v: np.ndarray            # (N+1, q) recorded measurement noise
    seed: str                # reproducibility token


@dataclass
class TrajectoryEnsemble:
    """Aggregated Monte Carlo statistics, optionally with the sample paths."""

    samples: int
    master_seed: int
    per_step_mean: np.ndarray               # (N+2, n) ensemble mean of x_k
    per_step_weighted_variance: np.ndarray  # (N+2,) E(x-xbar)'Q_risk(x-xbar)
    remote_error_trace: np.ndarray          # (N+1,) tr Cov(x_k - xhat^R_{k|k})
    failure_rate: float
    J_hat: float
    J_R_hat: float
    stderr_J: float
    stderr_JR: float
    mean_mode: str
    degenerate: bool = False
    trajectories: list[Trajectory] = field(default_factory=list)
    config: dict = field(default_factory=dict)


def default_noise(model: ValidatedModel) -> tuple[NoiseSpec, NoiseSpec]:
    return (NoiseSpec("gaussian", model.Q_w), NoiseSpec("gaussian", model.Q_v))


def _gains_list(policy, N: int) -> list[GainSet]:
    if isinstance(policy, RiccatiSolution):
        if policy.N != N:
            raise ValueError(f"policy solved for N={policy.N}, requested N={N}")
        return policy.gains
    if isinstance(policy, StationarySolution):
        return [policy.gains] * (N + 1)
    gains = list(policy)
    if len(gains) != N + 1:
        raise ValueError(f"need N+1={N + 1} gain sets, got {len(gains)}")
    return gains


def _draw_block(seed_seq: np.random.SeedSequence, model: ValidatedModel, N: int,
                w_spec: NoiseSpec, v_spec: NoiseSpec) -> tuple:
    """Draw one trajectory's primitives in the documented fixed order."""
    rng = np.random.default_rng(seed_seq)
    z0 = rng.standard_normal(model.n)
    w_std = w_spec.draw_standard(rng, (N + 1, model.n))
    v_std = v_spec.draw_standard(rng, (N + 1, model.q))
    chan = rng.random(N + 1)
    return z0, w_std, v_std, chan


class _BatchResult:
    """Per-chunk accumulators, combined in fixed chunk order."""

    def __init__(self, N: int, n: int):
        self.count = 0
        self.sum_x = np.zeros((N + 2, n))
        self.sum_xQx = np.zeros(N + 2)          # risk-weighted second moments
        self.sum_re = np.zeros((N + 1, n))      # remote error sums
        self.sum_re2 = np.zeros(N + 1)          # remote error squared norms
        self.drops = 0.0
        self.cost = []                           # per-trajectory cost
        self.risk = []                           # per-trajectory risk (analytic mean)
        self.paths = []

    def merge(self, other: "_BatchResult"):
        self.count += other.count
        self.sum_x += other.sum_x
        self.sum_xQx += other.sum_xQx
        self.sum_re += other.sum_re
        self.sum_re2 += other.sum_re2
        self.drops += other.drops
        self.cost.extend(other.cost)
        self.risk.extend(other.risk)
        self.paths.extend(other.paths)


def _run_chunk(model: ValidatedModel, gains: list[GainSet], N: int,
               w_spec: NoiseSpec, v_spec: NoiseSpec,
               seeds: list[np.random.SeedSequence], seed_tokens: list[str],
               Wk_all: np.ndarray, Ex: np.ndarray,
               mean_for_risk: np.ndarray, keep_paths: bool) -> _BatchResult:
    """Simulate a batch of trajectories in lockstep over time."""
    n, q, m1 = model.n, model.q, model.m1
    S = len(seeds)
    F0 = psd_factor(model.Sigma_init, "Sigma_init")
    Fw = w_spec.factor()
    Fv = v_spec.factor()

    blocks = [_draw_block(s, model, N, w_spec, v_spec) for s in seeds]
    z0 = np.stack([b[0] for b in blocks])
    w = np.einsum("ij,skj->ski", Fw, np.stack([b[1] for b in blocks]))
    v = np.einsum("ij,skj->ski", Fv, np.stack([b[2] for b in blocks]))
    eta = (np.stack([b[3] for b in blocks]) >= model.p).astype(float)

    A, BL, BR, C = model.A, model.B_local, model.B_remote, model.C
    Q, Qr, RL, RR, G = model.Q, model.Q_risk, model.R_local, model.R_remote, model.G

    out = _BatchResult(N, n)
    out.count = S
    x = model.x0_mean + z0 @ F0.T
    xl = np.tile(model.x0_mean, (S, 1))
    xr = np.tile(model.x0_mean, (S, 1))
    cost = np.zeros(S)
    risk = np.zeros(S)
    if keep_paths:
        X = np.empty((S, N + 2, n)); Y = np.empty((S, N + 1, q))
        UL = np.empty((S, N + 1, m1)); UR = np.empty((S, N + 1, model.m2))
        UT = np.empty((S, N + 1, m1)); UU = np.empty((S, N + 1, m1 + model.m2))
        XL = np.empty((S, N + 1, n)); XR = np.empty((S, N + 1, n))

    for k in range(N + 1):
        g = gains[k]
        y = x @ C.T + v[:, k]
        xlf = xl + (y - xl @ C.T) @ Wk_all[k].T
        xrf = eta[:, k, None] * xlf + (1.0 - eta[:, k, None]) * xr
        U = -(xrf @ g.K.T) - Ex[k] @ g.Kbar.T
        ut = -((xlf - xrf) @ g.local_gain.T)
        uL = U[:, :m1] + ut
        uR = U[:, m1:]

        dx = x - mean_for_risk[k]
        risk += np.einsum("si,ij,sj->s", dx, Qr, dx)
        cost += (np.einsum("si,ij,sj->s", x, Q, x)
                 + np.einsum("si,ij,sj->s", uL, RL, uL)
                 + np.einsum("si,ij,sj->s", uR, RR, uR))
        out.sum_x[k] += x.sum(axis=0)
        out.sum_xQx[k] += np.einsum("si,ij,sj->", x, Qr, x)
        re = x - xrf
        out.sum_re[k] += re.sum(axis=0)
        out.sum_re2[k] += np.einsum("si,si->", re, re)

        if keep_paths:
            X[:, k] = x; Y[:, k] = y; UL[:, k] = uL; UR[:, k] = uR
            UT[:, k] = ut; UU[:, k] = U; XL[:, k] = xlf; XR[:, k] = xrf

        # state update in the component form the replay check uses
        x = x @ A.T + uL @ BL.T + uR @ BR.T + w[:, k]
        xl = xlf @ A.T + U @ model.B.T + ut @ BL.T
        xr = xrf @ A.T + U @ model.B.T

    dx = x - mean_for_risk[N + 1]
    risk += np.einsum("si,ij,sj->s", dx, Qr, dx)
    cost += np.einsum("si,ij,sj->s", x, G, x)
    out.sum_x[N + 1] += x.sum(axis=0)
    out.sum_xQx[N + 1] += np.einsum("si,ij,sj->", x, Qr, x)
    out.drops += float((1.0 - eta).sum())
    out.cost = list(cost)
    out.risk = list(risk)

    if keep_paths:
        X[:, N + 1] = x
        for i in range(S):
            out.paths.append(Trajectory(
                x=X[i], y=Y[i], eta=eta[i].astype(int),
                u_local=UL[i], u_remote=UR[i], u_tilde=UT[i], U=UU[i],
                xhat_local=XL[i], xhat_remote=XR[i],
                w=w[i], v=v[i], seed=seed_tokens[i],
            ))
    return out


def _workers() -> int:
    cap = os.environ.get("RISKLQ_THREADS")
    avail = os.cpu_count() or 1
    if cap:
        return max(1, min(int(cap), avail))
    return max(1, min(4, avail))


def ensemble(model: ValidatedModel, policy, N: int, noise=None, samples: int = 1000,
             master_seed: int = 0, keep_paths: bool = False,
             mean_mode: str = "analytic") -> TrajectoryEnsemble:
    """Run `samples` independent closed-loop trajectories and aggregate.

    Per-step outputs: ensemble mean, risk-weighted variance about the
    ensemble mean, remote estimation-error covariance trace, and the overall
    empirical channel failure rate. Per-trajectory cost and risk feed the
    J/J_R estimates; risk is measured about the analytic mean path by
    default, or about the per-step ensemble mean with mean_mode="ensemble"
    (two passes; supports policies whose mean recursion is not the optimal
    one, at O(1/samples) plug-in bias).
    """
    if samples < 1:
        raise ValueError("samples must be positive")
    gains = _gains_list(policy, N)
    if noise is None:
        noise = default_noise(model)
    w_spec, v_spec = noise

    from .estimation import covariance_schedule

    Wk_all = covariance_schedule(model, N).W
    means = mean_propagate(model, gains)
    Ex = np.stack([m.Ex for m in means])

    master = np.random.SeedSequence(master_seed)
    children = master.spawn(samples)
    tokens = [f"master:{master_seed}/traj:{i}" for i in range(samples)]
    chunks = [(children[i:i + CHUNK], tokens[i:i + CHUNK])
              for i in range(0, samples, CHUNK)]

    def run_pass(mean_for_risk: np.ndarray, keep: bool) -> _BatchResult:
        total = _BatchResult(N, model.n)
        workers = _workers()
        if workers == 1 or len(chunks) == 1:
            results = [_run_chunk(model, gains, N, w_spec, v_spec, s, t,
                                  Wk_all, Ex, mean_for_risk, keep) for s, t in chunks]
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                futures = [pool.submit(_run_chunk, model, gains, N, w_spec, v_spec,
                                       s, t, Wk_all, Ex, mean_for_risk, keep)
                           for s, t in chunks]
                results = [f.result() for f in futures]
        for r in results:  # fixed chunk order keeps reductions deterministic
            total.merge(r)
        return total

    if mean_mode == "analytic":
        total = run_pass(Ex, keep_paths)
    elif mean_mode == "ensemble":
        first = run_pass(Ex, False)
        xbar = first.sum_x / samples
        total = run_pass(xbar, keep_paths)
    else:
        raise ValueError(f"unknown mean_mode {mean_mode!r}")

    S = samples
    mean_x = total.sum_x / S
    weighted = total.sum_xQx / S - np.einsum("ki,ij,kj->k", mean_x, model.Q_risk, mean_x)
    re_mean = total.sum_re / S
    re_trace = total.sum_re2 / S - np.einsum("ki,ki->k", re_mean, re_mean)
    cost = np.asarray(total.cost)
    risk = np.asarray(total.risk)
    degenerate = S < 2
    stderr_J = float(cost.std(ddof=1) / np.sqrt(S)) if not degenerate else float("nan")
    stderr_JR = float(risk.std(ddof=1) / np.sqrt(S)) if not degenerate else float("nan")
    if degenerate:
        weighted = np.zeros_like(weighted)
        re_trace = np.zeros_like(re_trace)
    return TrajectoryEnsemble(
        samples=S, master_seed=master_seed,
        per_step_mean=mean_x,
        per_step_weighted_variance=weighted,
        remote_error_trace=re_trace,
        failure_rate=float(total.drops / (S * (N + 1))),
        J_hat=float(cost.mean()), J_R_hat=float(risk.mean()),
        stderr_J=stderr_J, stderr_JR=stderr_JR,
        mean_mode=mean_mode, degenerate=degenerate,
        trajectories=total.paths,
        config={"N": N, "samples": S, "master_seed": master_seed,
                "noise": (w_spec.kind, v_spec.kind), "mean_mode": mean_mode},
    )


def simulate_trajectory(model: ValidatedModel, policy, N: int, noise=None,
                        seed: int = 0) -> Trajectory:
    """Simulate one seeded trajectory; bit-identical across repeated calls."""
    gains = _gains_list(policy, N)
    if noise is None:
        noise = default_noise(model)
    w_spec, v_spec = noise

    from .estimation import covariance_schedule

    Wk_all = covariance_schedule(model, N).W
    means = mean_propagate(model, gains)
    Ex = np.stack([m.Ex for m in means])
    result = _run_chunk(model, gains, N, w_spec, v_spec,
                        [np.random.SeedSequence(seed)], [f"seed:{seed}"],
                        Wk_all, Ex, Ex, keep_paths=True)
    return result.paths[0]


def replay(model: ValidatedModel, traj: Trajectory) -> np.ndarray:
    """Recompute the state path from recorded noises and controls.

    Applies the plant map exactly as the simulator does, so the result is
    bit-identical to traj.x.
    """
    N = traj.u_local.shape[0] - 1
    x = np.empty_like(traj.x)
    x[0] = traj.x[0]
    for k in range(N + 1):
        x[k + 1] = (x[k][None, :] @ model.A.T
                    + traj.u_local[k][None, :] @ model.B_local.T
                    + traj.u_remote[k][None, :] @ model.B_remote.T)[0] + traj.w[k]
    return x


def non_gaussian_invariance_check(model: ValidatedModel, N: int, mu: float,
                                  noise_kinds: list[str] | None = None,
                                  samples: int = 4000, seed: int = 0) -> dict:
    """Certainty-equivalence report across noise shapes.

    Solves the gain recursion once per kind and asserts the gains are
    byte-identical (they never see the noise distribution), then estimates
    cost and risk under each kind at equal covariance.
    """
    from .riccati import solve_finite

    if noise_kinds is None:
        noise_kinds = list(_KINDS)

    def spec_pair(kind: str):
        extra = {"df": 5.0} if kind == "scaled_student_t" else {}
        return (NoiseSpec(kind, model.Q_w, **extra), NoiseSpec(kind, model.Q_v, **extra))

    base = solve_finite(model, mu, N)
    report = {"kinds": {}, "gains_identical": True}
    for kind in noise_kinds:
        sol = solve_finite(model, mu, N)
        same = all(
            np.array_equal(a.K, b.K) and np.array_equal(a.Kbar, b.Kbar)
            and np.array_equal(a.local_gain, b.local_gain)
            for a, b in zip(base.gains, sol.gains)
        )
        report["gains_identical"] &= same
        est = ensemble(model, sol, N, noise=spec_pair(kind), samples=samples,
                       master_seed=seed)
        report["kinds"][kind] = {
            "J_hat": est.J_hat, "J_R_hat": est.J_R_hat,
            "stderr_J": est.stderr_J, "stderr_JR": est.stderr_JR,
        }
    return report
