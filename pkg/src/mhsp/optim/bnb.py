"""Branch-and-bound for models with binaries and indicator links.

Best-bound node selection with depth-first plunging, most-fractional
branching, and activity-based bound propagation at every node. Indicator
links are enforced by bound fixing when branching; if the forced variable has
a finite upper bound the implied big-M row is added to the relaxation only.
"""

import heapq
import logging
import math
import time

import numpy as np
import scipy.sparse as sp

from .lp import solve_lp_arrays
from .model import (
    EQ, GAP_REACHED, GE, INFEASIBLE, ITERATION_LIMIT, LE, OPTIMAL, UNBOUNDED,
    ModelError, SolveReport,
)

log = logging.getLogger("mhsp.optim")

INT_TOL = 1e-6
FEAS_TOL = 1e-7


class Propagator:
    """Activity-based bound tightening on ``row_lo <= A x <= row_hi``."""

    def __init__(self, A, senses, rhs, binary, indicators=(), max_rounds=25):
        A = sp.csr_matrix(A)
        self.rows = np.repeat(np.arange(A.shape[0]), np.diff(A.indptr))
        self.cols = A.indices.astype(np.int64)
        self.vals = A.data
        self.m = A.shape[0]
        senses = np.asarray(senses)
        self.row_lo = np.where(senses == LE, -np.inf, rhs)
        self.row_hi = np.where(senses == GE, np.inf, rhs)
        self.binary = binary
        self.ind = np.array([(k.binary, k.active, k.forced) for k in indicators], dtype=np.int64).reshape(-1, 3)
        self.max_rounds = max_rounds

    def _indicator_pass(self, lb, ub):
        if not len(self.ind):
            return False
        z, act, f = self.ind[:, 0], self.ind[:, 1], self.ind[:, 2]
        changed = False
        on = lb[f] > FEAS_TOL
        if on.any():
            zz, aa = z[on], act[on]
            hit1 = zz[(aa == 1) & (ub[zz] > 0)]
            hit0 = zz[(aa == 0) & (lb[zz] < 1)]
            if hit1.size or hit0.size:
                ub[hit1] = 0.0
                lb[hit0] = 1.0
                changed = True
        fixed_active = (lb[z] == ub[z]) & (lb[z] == act)
        ff = f[fixed_active & (ub[f] > 0)]
        if ff.size:
            ub[ff] = 0.0
            changed = True
        return changed

    def run(self, lb, ub):
        """Tighten ``lb``/``ub`` in place; return False if infeasible."""
        r, c, a = self.rows, self.cols, self.vals
        pos = a > 0
        for _ in range(self.max_rounds):
            changed = self._indicator_pass(lb, ub)
            if np.any(lb > ub + FEAS_TOL):
                return False
            if not r.size:
                if not changed:
                    break
                continue
            lo_c, hi_c = lb[c], ub[c]
            with np.errstate(invalid="ignore"):
                cmin = np.where(pos, a * lo_c, a * hi_c)
                cmax = np.where(pos, a * hi_c, a * lo_c)
            inf_min = np.isinf(cmin)
            inf_max = np.isinf(cmax)
            minact = np.bincount(r, np.where(inf_min, 0.0, cmin), self.m)
            maxact = np.bincount(r, np.where(inf_max, 0.0, cmax), self.m)
            nmin = np.bincount(r, inf_min, self.m)
            nmax = np.bincount(r, inf_max, self.m)

            scale = 1.0 + np.abs(self.row_hi[np.isfinite(self.row_hi)]).max(initial=0.0)
            if np.any((nmin == 0) & (minact > self.row_hi + FEAS_TOL * (1 + np.abs(self.row_hi)))):
                return False
            if np.any((nmax == 0) & (maxact < self.row_lo - FEAS_TOL * (1 + np.abs(self.row_lo)))):
                return False

            res_min_ok = (nmin[r] - inf_min) == 0
            res_max_ok = (nmax[r] - inf_max) == 0
            resmin = minact[r] - np.where(inf_min, 0.0, cmin)
            resmax = maxact[r] - np.where(inf_max, 0.0, cmax)
            hi_r = self.row_hi[r]
            lo_r = self.row_lo[r]

            new_ub = np.full(lb.shape, np.inf)
            new_lb = np.full(lb.shape, -np.inf)
            with np.errstate(invalid="ignore", divide="ignore"):
                m1 = res_min_ok & np.isfinite(hi_r)
                bnd = (hi_r - resmin) / a
                sel = m1 & pos
                np.minimum.at(new_ub, c[sel], bnd[sel])
                sel = m1 & ~pos
                np.maximum.at(new_lb, c[sel], bnd[sel])
                m2 = res_max_ok & np.isfinite(lo_r)
                bnd = (lo_r - resmax) / a
                sel = m2 & pos
                np.maximum.at(new_lb, c[sel], bnd[sel])
                sel = m2 & ~pos
                np.minimum.at(new_ub, c[sel], bnd[sel])
            # relax by the feasibility tolerance: rounding must never cut off a
            # feasible point, and the LP needs room to move inside the box
            new_ub = new_ub + FEAS_TOL * (1.0 + np.abs(new_ub))
            new_lb = new_lb - FEAS_TOL * (1.0 + np.abs(new_lb))
            b = self.binary
            new_ub[b] = np.floor(new_ub[b] + INT_TOL)
            new_lb[b] = np.ceil(new_lb[b] - INT_TOL)

            with np.errstate(invalid="ignore"):
                width = np.where(np.isfinite(ub - lb), ub - lb, np.inf)
                thresh_u = np.where(np.isfinite(ub), np.maximum(1e-6 * np.minimum(width, 1.0 + np.abs(ub)), 1e-9), 0.0)
                thresh_l = np.where(np.isfinite(lb), np.maximum(1e-6 * np.minimum(width, 1.0 + np.abs(lb)), 1e-9), 0.0)
            thresh_u[b] = 0.5
            thresh_l[b] = 0.5
            tighter_ub = new_ub < ub - thresh_u
            tighter_lb = new_lb > lb + thresh_l
            if tighter_ub.any():
                ub[tighter_ub] = new_ub[tighter_ub]
                changed = True
            if tighter_lb.any():
                lb[tighter_lb] = new_lb[tighter_lb]
                changed = True
            cross = lb > ub
            if cross.any():
                if np.any(lb[cross] - ub[cross] > FEAS_TOL * (1 + np.abs(ub[cross])) + 1e-9 * scale):
                    return False
                mid = 0.5 * (lb[cross] + ub[cross])
                lb[cross] = mid
                ub[cross] = mid
            if not changed:
                break
        return True


def _relaxation_rows(model, ub):
    """Model rows plus implied big-M rows for indicators with finite bounds."""
    A, senses, rhs = model.A, model.senses, model.rhs
    extra_r, extra_c, extra_v, extra_b = [], [], [], []
    k = 0
    for ind in model.indicators:
        big = ub[ind.forced]
        if not np.isfinite(big):
            continue
        extra_r += [k, k]
        extra_c += [ind.forced, ind.binary]
        if ind.active == 1:
            extra_v += [1.0, big]
            extra_b.append(big)
        else:
            extra_v += [1.0, -big]
            extra_b.append(0.0)
        k += 1
    if not k:
        return A, senses, rhs
    E = sp.csr_matrix((extra_v, (extra_r, extra_c)), shape=(k, model.num_vars))
    return (
        sp.vstack([A, E]).tocsr(),
        np.concatenate([senses, np.full(k, LE)]),
        np.concatenate([rhs, np.array(extra_b)]),
    )


def _rel_gap(inc, bound):
    if not math.isfinite(inc):
        return math.inf
    if not math.isfinite(bound):
        return math.inf
    return max(inc - bound, 0.0) / max(abs(inc), 1e-9)


def branch_and_bound(model, rel_gap=0.01, lp_method="auto", node_limit=200_000,
                     time_limit=None, propagate=True, log_every=200):
    t0 = time.perf_counter()
    model.validate()
    c = model.c
    const = model.obj_constant
    binary = model.is_binary.copy()
    lb = model.lb.copy()
    ub = model.ub.copy()
    ind = model.indicators

    prop = None
    if propagate:
        prop = Propagator(model.A, model.senses, model.rhs, binary, ind)
        if not prop.run(lb, ub):
            return SolveReport(INFEASIBLE, seconds=time.perf_counter() - t0)
    A, senses, rhs = _relaxation_rows(model, ub)
    if propagate and A.shape[0] != model.num_constrs:
        prop = Propagator(A, senses, rhs, binary, ind)

    ind_arr = np.array([(k.binary, k.active, k.forced) for k in ind], dtype=np.int64).reshape(-1, 3)
    bin_idx = np.flatnonzero(binary)

    incumbent, inc_x = math.inf, None
    lp_iters = 0
    nodes = 0
    seq = 0
    heap = []
    # node = (bound, seq, lb, ub); current plunge node kept outside the heap
    current = (-math.inf, 0, lb, ub)
    status_limit = None

    def global_bound(cur_bound):
        best = heap[0][0] if heap else math.inf
        return min(best, cur_bound)

    while current is not None or heap:
        if current is None:
            current = heapq.heappop(heap)
        bound_parent, _, nlb, nub = current
        current = None
        if bound_parent >= incumbent - rel_gap * abs(incumbent) and math.isfinite(incumbent):
            continue
        if nodes >= node_limit or (time_limit is not None and time.perf_counter() - t0 > time_limit):
            heapq.heappush(heap, (bound_parent, seq, nlb, nub))
            status_limit = ITERATION_LIMIT
            break
        nodes += 1
        if prop is not None and nodes > 1 and not prop.run(nlb, nub):
            continue
        st, x, _, it = solve_lp_arrays(c, A, senses, rhs, nlb, nub, tol=FEAS_TOL, method=lp_method)
        lp_iters += it
        if st == INFEASIBLE:
            continue
        if st == UNBOUNDED:
            if nodes == 1:
                return SolveReport(UNBOUNDED, seconds=time.perf_counter() - t0, nodes=nodes, iterations=lp_iters)
            continue
        if st != OPTIMAL:
            continue
        obj = float(c @ x) + const
        if math.isfinite(incumbent) and obj >= incumbent - rel_gap * abs(incumbent):
            continue

        # branching candidate
        frac = x[bin_idx] - np.floor(x[bin_idx])
        dist = np.minimum(frac, 1.0 - frac)
        branch_var, pref = -1, 1
        if bin_idx.size and dist.max() > INT_TOL:
            k = int(np.argmax(dist))
            branch_var = int(bin_idx[k])
            pref = 1 if frac[k] >= 0.5 else 0
        elif len(ind_arr):
            zv = np.rint(x[ind_arr[:, 0]])
            viol = (zv == ind_arr[:, 1]) & (x[ind_arr[:, 2]] > FEAS_TOL)
            if viol.any():
                k = int(np.flatnonzero(viol)[0])
                branch_var = int(ind_arr[k, 0])
                pref = 1 - int(ind_arr[k, 1])

        if branch_var < 0:
            xi = x.copy()
            xi[bin_idx] = np.rint(xi[bin_idx])
            if obj < incumbent:
                incumbent, inc_x = obj, xi
                log.info("event=incumbent node=%d objective=%.12g bound=%.12g gap=%.6g",
                         nodes, incumbent, global_bound(obj), _rel_gap(incumbent, global_bound(obj)))
            if _rel_gap(incumbent, global_bound(math.inf)) <= rel_gap:
                break
            continue

        children = []
        for val in (pref, 1 - pref):
            clb, cub = nlb.copy(), nub.copy()
            clb[branch_var] = cub[branch_var] = float(val)
            for zb, act, f in ind_arr[ind_arr[:, 0] == branch_var] if len(ind_arr) else ():
                if act == val:
                    cub[f] = 0.0
                    if clb[f] > 0:
                        clb[f] = 0.0
            children.append((obj, seq + 1 + len(children), clb, cub))
        seq += 2
        current = children[0]
        heapq.heappush(heap, children[1])

        if nodes % log_every == 0:
            gb = global_bound(obj)
            log.info("event=bnb node=%d open=%d incumbent=%.12g bound=%.12g gap=%.6g",
                     nodes, len(heap) + 1, incumbent, gb, _rel_gap(incumbent, gb))
        if math.isfinite(incumbent) and _rel_gap(incumbent, global_bound(obj)) <= rel_gap:
            break

    elapsed = time.perf_counter() - t0
    open_bound = global_bound(current[0] if current is not None else math.inf)
    if inc_x is None:
        status = status_limit or INFEASIBLE
        return SolveReport(status, seconds=elapsed, nodes=nodes, iterations=lp_iters,
                           bound=open_bound)
    final_bound = min(open_bound, incumbent)
    gap = _rel_gap(incumbent, final_bound)
    if status_limit:
        status = ITERATION_LIMIT
    elif heap or current is not None:
        status = GAP_REACHED
    else:
        status = OPTIMAL
    log.info("event=bnb_done status=%s nodes=%d objective=%.12g bound=%.12g gap=%.6g seconds=%.3f",
             status, nodes, incumbent, final_bound, gap, elapsed)
    return SolveReport(status, objective=incumbent, x=inc_x, gap=gap, bound=final_bound,
                       seconds=elapsed, iterations=lp_iters, nodes=nodes)


def highs_milp(model, rel_gap=0.01, time_limit=None):
    """Solve with HiGHS' MIP solver; indicator links become big-M rows."""
    from scipy.optimize import Bounds, LinearConstraint, milp

    t0 = time.perf_counter()
    model.validate()
    ub = model.ub
    if any(not np.isfinite(ub[k.forced]) for k in model.indicators):
        raise ModelError("HiGHS path needs finite upper bounds on indicator targets")
    A, senses, rhs = _relaxation_rows(model, ub)
    lo = np.where(senses == LE, -np.inf, rhs)
    hi = np.where(senses == GE, np.inf, rhs)
    cons = [LinearConstraint(A, lo, hi)] if A.shape[0] else []
    options = {"mip_rel_gap": rel_gap, "disp": False}
    if time_limit is not None:
        options["time_limit"] = time_limit
    res = milp(model.c, constraints=cons, integrality=model.is_binary.astype(int),
               bounds=Bounds(model.lb, model.ub), options=options)
    elapsed = time.perf_counter() - t0
    nodes = int(getattr(res, "mip_node_count", 0) or 0)
    if res.x is None:
        status = INFEASIBLE if res.status in (2,) else (UNBOUNDED if res.status == 3 else ITERATION_LIMIT)
        return SolveReport(status, seconds=elapsed, nodes=nodes)
    x = res.x.copy()
    b = model.is_binary
    x[b] = np.rint(x[b])
    obj = model.objective_value(x)
    bound = float(getattr(res, "mip_dual_bound", obj)) + model.obj_constant
    gap = _rel_gap(obj, bound)
    status = OPTIMAL if res.status == 0 else ITERATION_LIMIT
    if status == OPTIMAL and gap > 1e-9:
        status = GAP_REACHED
    return SolveReport(status, objective=obj, x=x, gap=gap, bound=bound, seconds=elapsed, nodes=nodes)


def solve_milp(model, rel_gap=0.01, lp_method="auto", engine="bnb", **kw):
    """Solve a model with binaries/indicators to relative gap ``rel_gap``.

    ``engine="bnb"`` is the built-in branch-and-bound; ``engine="highs"``
    hands the big-M form to HiGHS (used as a cross-check and for speed).
    """
    if rel_gap <= 0:
        raise ValueError("rel_gap must be positive")
    if engine == "highs":
        return highs_milp(model, rel_gap, time_limit=kw.get("time_limit"))
    if engine != "bnb":
        raise ValueError(f"unknown MILP engine {engine!r}")
    return branch_and_bound(model, rel_gap=rel_gap, lp_method=lp_method, **kw)
