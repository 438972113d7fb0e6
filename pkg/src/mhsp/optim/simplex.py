"""Dense bounded-variable revised simplex (two phases, Bland fallback)."""

import logging

import numpy as np

from .model import EQ, GE, INFEASIBLE, ITERATION_LIMIT, LE, OPTIMAL, UNBOUNDED

log = logging.getLogger("mhsp.optim")

_PIVOT_TOL = 1e-9
_REFACTOR_EVERY = 64
_DEGENERATE_LIMIT = 40


class _Result:
    __slots__ = ("status", "x", "y", "objective", "iterations")

    def __init__(self, status, x=None, y=None, objective=float("nan"), iterations=0):
        self.status = status
        self.x = x
        self.y = y
        self.objective = objective
        self.iterations = iterations


def _start_value(lo, hi):
    if np.isfinite(lo):
        return lo
    if np.isfinite(hi):
        return hi
    return 0.0


def simplex(c, A, senses, b, lb, ub, tol=1e-7, max_iter=None):
    """Minimise ``c @ x`` s.t. ``A x (senses) b`` and ``lb <= x <= ub``.

    ``A`` is a dense (m, n) array. Returns an object with ``status``, primal
    ``x`` (length n), row duals ``y`` (d objective / d b) and ``iterations``.
    """
    A = np.asarray(A, dtype=float)
    m, n = A.shape
    c = np.asarray(c, dtype=float)
    b = np.asarray(b, dtype=float)
    lb = np.asarray(lb, dtype=float)
    ub = np.asarray(ub, dtype=float)
    if c.shape != (n,) or b.shape != (m,) or lb.shape != (n,) or ub.shape != (n,) or len(senses) != m:
        raise ValueError("dimension mismatch between objective, matrix, bounds and rows")
    if np.any(lb > ub + tol):
        return _Result(INFEASIBLE)
    if max_iter is None:
        max_iter = 50 * (m + n) + 1000

    # slack columns: "<" gets +s, ">" gets -s, s >= 0
    ineq = [i for i in range(m) if senses[i] != EQ]
    ns = len(ineq)
    S = np.zeros((m, ns))
    for k, i in enumerate(ineq):
        S[i, k] = 1.0 if senses[i] == LE else -1.0
    slack_of_row = {i: n + k for k, i in enumerate(ineq)}

    x = np.empty(n + ns + m)
    x[:n] = [_start_value(lo, hi) for lo, hi in zip(lb, ub)]
    x[n:] = 0.0
    resid = b - A @ x[:n]

    # artificial column i is sign_i * e_i
    art_sign = np.where(resid >= 0, 1.0, -1.0)
    M = np.hstack([A, S, np.diag(art_sign)])
    lo = np.concatenate([lb, np.zeros(ns), np.zeros(m)])
    hi = np.concatenate([ub, np.full(ns, np.inf), np.full(m, np.inf)])

    basis = np.empty(m, dtype=np.int64)
    for i in range(m):
        j = slack_of_row.get(i)
        if j is not None and resid[i] * M[i, j] >= 0:
            basis[i] = j
            x[j] = resid[i] * M[i, j]
        else:
            basis[i] = n + ns + i
            x[n + ns + i] = abs(resid[i])
    n_total = n + ns + m
    is_art = np.zeros(n_total, dtype=bool)
    is_art[n + ns:] = True
    unused_art = np.setdiff1d(np.arange(n + ns, n_total), basis)
    hi[unused_art] = 0.0

    cost1 = np.where(is_art, 1.0, 0.0)
    iters = 0
    state = {"bland": False, "degenerate": 0}

    def run(cost, phase):
        nonlocal basis, iters
        Binv = np.linalg.inv(M[:, basis])
        in_basis = np.zeros(n_total, dtype=bool)
        in_basis[basis] = True
        dtol = 1e-9 * (1.0 + np.max(np.abs(cost), initial=0.0))
        since_refactor = 0
        while True:
            if iters >= max_iter:
                return ITERATION_LIMIT
            if since_refactor >= _REFACTOR_EVERY:
                Binv = np.linalg.inv(M[:, basis])
                nonbasic = ~in_basis
                x[basis] = Binv @ (b - M[:, nonbasic] @ x[nonbasic])
                since_refactor = 0
            y = cost[basis] @ Binv
            d = cost - y @ M
            d[in_basis] = 0.0
            can_up = (x < hi - tol) & (d < -dtol) & ~in_basis
            can_down = (x > lo + tol) & (d > dtol) & ~in_basis
            eligible = can_up | can_down
            if not eligible.any():
                return OPTIMAL
            cand = np.flatnonzero(eligible)
            if state["bland"]:
                j = int(cand[0])
            else:
                j = int(cand[np.argmax(np.abs(d[cand]))])
            step_dir = 1.0 if d[j] < 0 else -1.0
            alpha = Binv @ M[:, j]
            rate = -step_dir * alpha
            xb = x[basis]
            theta = np.full(m, np.inf)
            neg = rate < -_PIVOT_TOL
            pos = rate > _PIVOT_TOL
            with np.errstate(invalid="ignore", divide="ignore"):
                theta[neg] = (xb[neg] - lo[basis][neg]) / -rate[neg]
                theta[pos] = (hi[basis][pos] - xb[pos]) / rate[pos]
            theta = np.maximum(theta, 0.0)
            flip = hi[j] - lo[j]
            tmin = theta.min() if m else np.inf
            if not np.isfinite(tmin) and not np.isfinite(flip):
                return UNBOUNDED
            iters += 1
            since_refactor += 1
            if flip <= tmin:
                x[j] += step_dir * flip
                x[basis] += rate * flip
                state["degenerate"] = 0
                continue
            ties = np.flatnonzero(theta <= tmin + 1e-12)
            if state["bland"]:
                r = int(ties[np.argmin(basis[ties])])
            else:
                r = int(ties[np.argmax(np.abs(alpha[ties]))])
            t = theta[r]
            x[j] += step_dir * t
            x[basis] += rate * t
            leaving = basis[r]
            x[leaving] = lo[leaving] if rate[r] < 0 else hi[leaving]
            if t <= 1e-12:
                state["degenerate"] += 1
                if state["degenerate"] > _DEGENERATE_LIMIT and not state["bland"]:
                    state["bland"] = True
                    log.debug("event=bland_switch phase=%d iteration=%d", phase, iters)
            else:
                state["degenerate"] = 0
            piv = alpha[r]
            Binv[r, :] /= piv
            col = alpha.copy()
            col[r] = 0.0
            Binv -= np.outer(col, Binv[r, :])
            in_basis[leaving] = False
            in_basis[j] = True
            basis[r] = j
            if phase == 1 and is_art[leaving]:
                hi[leaving] = 0.0

    status = run(cost1, 1)
    if status == ITERATION_LIMIT:
        return _Result(ITERATION_LIMIT, iterations=iters)
    infeas = float(x[is_art].sum())
    if infeas > tol * (1.0 + np.max(np.abs(b), initial=0.0)):
        return _Result(INFEASIBLE, iterations=iters)
    hi[is_art] = 0.0
    x[is_art] = 0.0

    cost2 = np.concatenate([c, np.zeros(ns + m)])
    state["bland"] = False
    state["degenerate"] = 0
    status = run(cost2, 2)
    if status != OPTIMAL:
        return _Result(status, iterations=iters)

    Binv = np.linalg.inv(M[:, basis])
    in_basis = np.zeros(n_total, dtype=bool)
    in_basis[basis] = True
    nonbasic = ~in_basis
    x[basis] = Binv @ (b - M[:, nonbasic] @ x[nonbasic])
    y = cost2[basis] @ Binv
    xs = np.clip(x[:n], lb, ub)
    log.debug("event=simplex_done iterations=%d objective=%.12g", iters, float(c @ xs))
    return _Result(OPTIMAL, xs, y, float(c @ xs), iters)


def dual_bound(c, A, senses, b, lb, ub, y):
    """Lagrangian lower bound at row multipliers ``y`` (signs projected).

    Valid for any ``y``; equals the primal optimum at an optimal dual.
    """
    y = np.asarray(y, dtype=float).copy()
    senses = np.asarray(senses)
    y[senses == LE] = np.minimum(y[senses == LE], 0.0)
    y[senses == GE] = np.maximum(y[senses == GE], 0.0)
    d = np.asarray(c, dtype=float) - A.T @ y
    d[np.abs(d) <= 1e-11 * (1.0 + np.max(np.abs(c), initial=0.0))] = 0.0
    total = float(b @ y)
    for dj, lo, hi in zip(d, lb, ub):
        if dj > 0:
            total += dj * lo
        elif dj < 0:
            total += dj * hi
    return total
