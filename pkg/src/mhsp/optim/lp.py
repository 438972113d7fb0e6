"""LP front end: dense simplex for small models, HiGHS for large ones."""

import logging
import time

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .model import (
    EQ, GE, INFEASIBLE, ITERATION_LIMIT, LE, OPTIMAL, UNBOUNDED,
    ModelError, SolveReport, SolverError,
)
from .simplex import simplex

log = logging.getLogger("mhsp.optim")

# above this many matrix entries the dense tableau stops paying off
DENSE_LIMIT = 60_000

# "highs" lets HiGHS choose; the others pin dual simplex or interior point
HIGHS_METHODS = ("highs", "highs-ds", "highs-ipm")
_HIGHS_ATTEMPTS = (("highs", {}), ("highs-ds", {}), ("highs-ipm", {}), ("highs-ds", {"presolve": False}))


def _choose(model, method):
    if method != "auto":
        return method
    return "simplex" if model.num_vars * max(model.num_constrs, 1) <= DENSE_LIMIT else "highs"


def lp_arrays(model, lb=None, ub=None):
    return (
        model.c,
        model.A,
        model.senses,
        model.rhs,
        model.lb if lb is None else lb,
        model.ub if ub is None else ub,
    )


def solve_lp_arrays(c, A, senses, b, lb, ub, tol=1e-7, method="auto", max_iter=None):
    """Solve ``min c x`` over rows/bounds; returns (status, x, y, iterations)."""
    n = c.shape[0]
    if method == "auto":
        method = "simplex" if n * max(A.shape[0], 1) <= DENSE_LIMIT else "highs"
    if method == "simplex":
        dense = A.toarray() if sp.issparse(A) else np.asarray(A)
        res = simplex(c, dense, senses, b, lb, ub, tol=tol, max_iter=max_iter)
        return res.status, res.x, res.y, res.iterations
    if method not in HIGHS_METHODS:
        raise ValueError(f"unknown LP method {method!r}")
    return _highs(c, A, senses, b, lb, ub, tol, max_iter, method)


def _highs(c, A, senses, b, lb, ub, tol, max_iter, algorithm="highs"):
    A = sp.csr_matrix(A)
    senses = np.asarray(senses)
    le = np.flatnonzero(senses == LE)
    ge = np.flatnonzero(senses == GE)
    eq = np.flatnonzero(senses == EQ)
    ub_rows = np.concatenate([le, ge])
    A_ub = sp.vstack([A[le], -A[ge]]).tocsr() if ub_rows.size else None
    b_ub = np.concatenate([b[le], -b[ge]]) if ub_rows.size else None
    A_eq = A[eq] if eq.size else None
    b_eq = b[eq] if eq.size else None
    lb = np.where(np.isfinite(lb), lb, -np.inf)
    bounds = np.column_stack([lb, ub])
    if np.any(bounds[:, 0] > bounds[:, 1] + tol):
        return INFEASIBLE, None, None, 0
    bounds[:, 1] = np.maximum(bounds[:, 1], bounds[:, 0])
    options = {"primal_feasibility_tolerance": tol, "dual_feasibility_tolerance": tol}
    if max_iter is not None:
        options["maxiter"] = int(max_iter)
    # numerically awkward node LPs occasionally defeat one algorithm; retry with others
    attempts = _HIGHS_ATTEMPTS if algorithm == "highs" else ((algorithm, {}),) + _HIGHS_ATTEMPTS
    for method, extra in attempts:
        res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=bounds,
                      method=method, options=dict(options, **extra))
        if res.status in (0, 1, 2, 3):
            break
        log.debug("event=highs_retry method=%s status=%d message=%s", method, res.status, res.message)
    iters = int(getattr(res, "nit", 0) or 0)
    if res.status == 0:
        y = np.zeros(A.shape[0])
        if ub_rows.size:
            marg = res.ineqlin.marginals
            y[le] = marg[: le.size]
            y[ge] = -marg[le.size:]
        if eq.size:
            y[eq] = res.eqlin.marginals
        x = np.clip(res.x, lb, ub)
        return OPTIMAL, x, y, iters
    if res.status == 2:
        return INFEASIBLE, None, None, iters
    if res.status == 3:
        return UNBOUNDED, None, None, iters
    if res.status == 1:
        return ITERATION_LIMIT, None, None, iters
    raise SolverError(f"HiGHS failed: {res.message}")


def solve_lp(model, tol=1e-7, method="auto", max_iter=None):
    """Solve a pure LP model.

    ``method`` is ``"simplex"`` (dense revised simplex), ``"highs"``,
    ``"highs-ds"``, ``"highs-ipm"`` or ``"auto"`` (simplex while the dense
    matrix stays small).
    """
    if model.num_binaries or model.indicators:
        raise ModelError("solve_lp called on a model with binaries or indicator links")
    model.validate()
    method = _choose(model, method)
    t0 = time.perf_counter()
    status, x, y, iters = solve_lp_arrays(*lp_arrays(model), tol=tol, method=method, max_iter=max_iter)
    elapsed = time.perf_counter() - t0
    obj = model.objective_value(x) if status == OPTIMAL else float("nan")
    log.info("event=lp_done method=%s status=%s objective=%.12g iterations=%d seconds=%.4f",
             method, status, obj, iters, elapsed)
    return SolveReport(status=status, objective=obj, x=x, duals=y,
                       gap=0.0 if status == OPTIMAL else float("nan"),
                       bound=obj, seconds=elapsed, iterations=iters)
