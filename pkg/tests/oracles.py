"""Independent evaluators the analytic formulas are pinned against.

Nothing here reuses the package's cost or risk recursions. The enumeration
evaluator computes exact closed-loop moments pattern by channel pattern;
the scalar oracle minimizes an explicit low-dimensional policy class with a
generic optimizer.
"""

import itertools

import numpy as np
from scipy.optimize import minimize

from risklq.estimation import covariance_schedule
from risklq.policy import mean_propagate


def enumerate_cost_risk(model, gains, N):
    """Exact E[J] and E[J_R] by summing over all 2^(N+1) channel patterns.

    For each pattern, the stacked vector [state; local predictor; remote
    predictor] evolves under known linear maps, so its mean and covariance
    propagate exactly. Exponential in N; meant for small horizons.
    """
    n, q, m1 = model.n, model.q, model.m1
    sched = covariance_schedule(model, N)
    Ex = [s.Ex for s in mean_propagate(model, gains)]

    Sx = np.hstack([np.eye(n), np.zeros((n, 2 * n))])
    Srp = np.hstack([np.zeros((n, 2 * n)), np.eye(n)])
    zero_gv = np.zeros((n, q))

    def quad(T, Gv, c, M, mvec, P):
        z = T @ mvec + c
        val = z @ M @ z + np.trace(M @ T @ P @ T.T)
        if Gv is not None:
            val += np.trace(M @ Gv @ model.Q_v @ Gv.T)
        return val

    J = 0.0
    snapshots = [[] for _ in range(N + 2)]   # (weight, mean_x, cov_xx)
    for eta in itertools.product((0, 1), repeat=N + 1):
        w_pat = float(np.prod([(1.0 - model.p) if e else model.p for e in eta]))
        if w_pat == 0.0:
            continue
        mvec = np.concatenate([model.x0_mean] * 3)
        P = np.zeros((3 * n, 3 * n))
        P[:n, :n] = model.Sigma_init
        Jp = 0.0
        for k in range(N + 1):
            g = gains[k]
            Wk = sched.W[k]
            Tlf = np.hstack([Wk @ model.C, np.eye(n) - Wk @ model.C,
                             np.zeros((n, n))])
            Gl = Wk
            if eta[k]:
                Trf, Gr = Tlf, Wk
            else:
                Trf, Gr = Srp, zero_gv
            TU = -g.K @ Trf
            GU = -g.K @ Gr
            aU = -g.Kbar @ Ex[k]
            Tt = -g.local_gain @ (Tlf - Trf)
            Gt = -g.local_gain @ (Gl - Gr)

            Jp += quad(Sx, None, np.zeros(n), model.Q, mvec, P)
            Jp += quad(TU[:m1] + Tt, GU[:m1] + Gt, aU[:m1], model.R_local, mvec, P)
            Jp += quad(TU[m1:], GU[m1:], aU[m1:], model.R_remote, mvec, P)
            snapshots[k].append((w_pat, Sx @ mvec, Sx @ P @ Sx.T))

            Tnext = np.vstack([
                model.A @ Sx + model.B @ TU + model.B_local @ Tt,
                model.A @ Tlf + model.B @ TU + model.B_local @ Tt,
                model.A @ Trf + model.B @ TU,
            ])
            Gnext = np.vstack([
                model.B @ GU + model.B_local @ Gt,
                model.A @ Gl + model.B @ GU + model.B_local @ Gt,
                model.A @ Gr + model.B @ GU,
            ])
            shift = np.concatenate([model.B @ aU] * 3)
            mvec = Tnext @ mvec + shift
            P = Tnext @ P @ Tnext.T + Gnext @ model.Q_v @ Gnext.T
            P[:n, :n] += model.Q_w

        Jp += quad(Sx, None, np.zeros(n), model.G, mvec, P)
        snapshots[N + 1].append((w_pat, Sx @ mvec, Sx @ P @ Sx.T))
        J += w_pat * Jp

    J_R = 0.0
    for entries in snapshots:
        xbar = sum(w * m for w, m, _ in entries)
        for w, m, Pxx in entries:
            d = m - xbar
            J_R += w * (d @ model.Q_risk @ d + np.trace(model.Q_risk @ Pxx))
    return J, J_R


def scalar_policy_search(A, q_w, rl, rr, g_term, q_r, q_cost, mu, x0_mean,
                         s0, N=2):
    """Best mu-augmented cost over per-step linear scalar policies.

    Perfect observation (C = 1, no measurement noise) and a perfect link
    make both controllers see the state, and equal input weights make the
    symmetric law u^L = u^R = -a_k (x - Ex_k) - b_k Ex_k optimal within the
    linear class. Mean and deviation variance propagate in closed form:
    Ex' = (A - 2 b) Ex, s' = (A - 2 a)^2 s + q_w. Minimized with BFGS from
    several starts.
    """

    def objective(theta):
        a, b = theta[:N + 1], theta[N + 1:]
        xbar, s = x0_mean, s0
        total = 0.0
        for k in range(N + 1):
            total += (q_cost * (xbar ** 2 + s) + mu * q_r * s
                      + (rl + rr) * (a[k] ** 2 * s + b[k] ** 2 * xbar ** 2))
            xbar = (A - 2.0 * b[k]) * xbar
            s = (A - 2.0 * a[k]) ** 2 * s + q_w
        return total + g_term * (xbar ** 2 + s) + mu * q_r * s

    best = np.inf
    for start in (np.zeros(2 * (N + 1)),
                  np.full(2 * (N + 1), 0.5 * A),
                  np.full(2 * (N + 1), 0.25)):
        res = minimize(objective, start, method="BFGS",
                       options={"gtol": 1e-12, "maxiter": 2000})
        best = min(best, float(res.fun))
    return best
