"""Linear/mixed-binary model container shared by the LP, DE and surrogate MIP."""

from bisect import bisect_right
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

INF = float("inf")

LE, EQ, GE = "<", "=", ">"
_SENSE_ALIASES = {"<": LE, "<=": LE, "L": LE, "=": EQ, "==": EQ, "E": EQ, ">": GE, ">=": GE, "G": GE}

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
GAP_REACHED = "gap-reached"
ITERATION_LIMIT = "iteration-limit"


class ModelError(ValueError):
    """Structural problem with a model (bad index, bounds, shapes)."""


class SolverError(RuntimeError):
    pass


def _norm_sense(s):
    try:
        return _SENSE_ALIASES[s]
    except KeyError:
        raise ModelError(f"unknown constraint sense {s!r}") from None


@dataclass(frozen=True)
class Indicator:
    """``binary == active`` forces ``forced`` (a nonnegative variable) to zero."""

    binary: int
    active: int
    forced: int


@dataclass
class SolveReport:
    status: str
    objective: float = float("nan")
    x: Optional[np.ndarray] = None
    duals: Optional[np.ndarray] = None
    gap: float = float("nan")
    bound: float = float("nan")
    seconds: float = 0.0
    iterations: int = 0
    nodes: int = 0

    @property
    def ok(self):
        return self.status in (OPTIMAL, GAP_REACHED)

    def value(self, idx):
        return self.x[np.asarray(idx)]

    def as_dict(self, timing=True):
        d = {
            "status": self.status,
            "objective": self.objective,
            "gap": self.gap,
            "bound": self.bound,
            "iterations": self.iterations,
            "nodes": self.nodes,
        }
        if timing:
            d["seconds"] = self.seconds
        return d


class _NameBlocks:
    """Lazily materialised names: one entry per ``add_*`` call."""

    def __init__(self):
        self.starts = []
        self.blocks = []  # (prefix, shape or None)

    def add(self, start, prefix, shape=None):
        self.starts.append(start)
        self.blocks.append((prefix, shape))

    def name(self, j):
        k = bisect_right(self.starts, j) - 1
        prefix, shape = self.blocks[k]
        if shape is None:
            return prefix
        idx = np.unravel_index(j - self.starts[k], shape)
        return f"{prefix}[{','.join(str(int(i)) for i in idx)}]"

    def all(self, total):
        out = []
        for k, (prefix, shape) in enumerate(self.blocks):
            if shape is None:
                out.append(prefix)
                continue
            n = int(np.prod(shape))
            if len(shape) == 1:
                out.extend(f"{prefix}[{i}]" for i in range(n))
            else:
                out.extend(
                    f"{prefix}[{','.join(map(str, idx))}]" for idx in np.ndindex(*shape)
                )
        assert len(out) == total
        return out

    def copy(self):
        c = _NameBlocks()
        c.starts = list(self.starts)
        c.blocks = list(self.blocks)
        return c


class LinearModel:
    """Minimisation model: bounded variables, sparse rows, indicator links.

    Variables and constraints are appended in blocks; index arrays returned by
    :meth:`add_vars` / :meth:`add_constrs` are the handles used everywhere else.
    """

    def __init__(self, name="model"):
        self.name = name
        self._lb = np.zeros(0)
        self._ub = np.zeros(0)
        self._bin = np.zeros(0, dtype=bool)
        self._lb_chunks, self._ub_chunks, self._bin_chunks = [], [], []
        self._nvars = 0
        self._vnames = _NameBlocks()

        self._r_chunks, self._c_chunks, self._v_chunks = [], [], []
        self._sense_chunks, self._rhs_chunks = [], []
        self._ncons = 0
        self._cnames = _NameBlocks()

        self._obj_idx, self._obj_val = [], []
        self.obj_constant = 0.0
        self.indicators = []
        self._cache = {}

    # ------------------------------------------------------------------ vars
    def _flush_vars(self):
        if self._lb_chunks:
            self._lb = np.concatenate([self._lb] + self._lb_chunks)
            self._ub = np.concatenate([self._ub] + self._ub_chunks)
            self._bin = np.concatenate([self._bin] + self._bin_chunks)
            self._lb_chunks, self._ub_chunks, self._bin_chunks = [], [], []

    def add_vars(self, prefix, shape, lb=0.0, ub=INF, binary=False):
        shape = (shape,) if np.isscalar(shape) else tuple(shape)
        n = int(np.prod(shape))
        start = self._nvars
        if binary:
            lb = 0.0 if lb is None else lb
            ub = 1.0 if ub is INF else ub
        self._lb_chunks.append(np.broadcast_to(np.asarray(lb, dtype=float), shape).ravel().copy())
        self._ub_chunks.append(np.broadcast_to(np.asarray(ub, dtype=float), shape).ravel().copy())
        self._bin_chunks.append(np.full(n, bool(binary)))
        self._vnames.add(start, prefix, shape)
        self._nvars += n
        self._cache.clear()
        return np.arange(start, start + n).reshape(shape)

    def add_var(self, name, lb=0.0, ub=INF, binary=False):
        j = self._nvars
        if binary and ub is INF:
            ub = 1.0
        self._lb_chunks.append(np.array([float(lb)]))
        self._ub_chunks.append(np.array([float(ub)]))
        self._bin_chunks.append(np.array([bool(binary)]))
        self._vnames.add(j, name)
        self._nvars += 1
        self._cache.clear()
        return j

    @property
    def num_vars(self):
        return self._nvars

    @property
    def lb(self):
        self._flush_vars()
        return self._lb

    @property
    def ub(self):
        self._flush_vars()
        return self._ub

    @property
    def is_binary(self):
        self._flush_vars()
        return self._bin

    @property
    def num_binaries(self):
        return int(self.is_binary.sum())

    def set_bounds(self, idx, lb=None, ub=None):
        self._flush_vars()
        idx = np.asarray(idx)
        if lb is not None:
            self._lb[idx] = lb
        if ub is not None:
            self._ub[idx] = ub
        self._cache.clear()

    def var_name(self, j):
        return self._vnames.name(j)

    def var_names(self):
        return self._vnames.all(self._nvars)

    # ----------------------------------------------------------- constraints
    def add_constrs(self, prefix, n, rows, cols, vals, sense, rhs):
        """Append ``n`` rows given in local COO form (``rows`` in 0..n-1)."""
        rows = np.asarray(rows, dtype=np.int64).ravel()
        cols = np.asarray(cols, dtype=np.int64).ravel()
        vals = np.asarray(vals, dtype=float).ravel()
        if not (rows.shape == cols.shape == vals.shape):
            raise ModelError("rows/cols/vals length mismatch")
        if rows.size and (rows.min() < 0 or rows.max() >= n):
            raise ModelError("local row index out of range")
        start = self._ncons
        if np.isscalar(sense) or isinstance(sense, str):
            sense_arr = np.full(n, _norm_sense(sense), dtype="<U1")
        else:
            sense_arr = np.array([_norm_sense(s) for s in sense], dtype="<U1")
        rhs_arr = np.broadcast_to(np.asarray(rhs, dtype=float), (n,)).copy()
        keep = vals != 0.0
        self._r_chunks.append(rows[keep] + start)
        self._c_chunks.append(cols[keep])
        self._v_chunks.append(vals[keep])
        self._sense_chunks.append(sense_arr)
        self._rhs_chunks.append(rhs_arr)
        self._cnames.add(start, prefix, (n,) if n != 1 else None)
        self._ncons += n
        self._cache.clear()
        return np.arange(start, start + n)

    def add_constr(self, terms, sense, rhs, name=None):
        """``terms`` is a mapping var -> coefficient or an (idx, coef) pair."""
        if isinstance(terms, dict):
            cols = np.fromiter(terms.keys(), dtype=np.int64, count=len(terms))
            vals = np.fromiter(terms.values(), dtype=float, count=len(terms))
        else:
            cols, vals = (np.asarray(a).ravel() for a in terms)
        name = name or f"c{self._ncons}"
        return int(self.add_constrs(name, 1, np.zeros(len(cols), dtype=np.int64), cols, vals, sense, rhs)[0])

    @property
    def num_constrs(self):
        return self._ncons

    def _coo(self):
        if "coo" not in self._cache:
            if self._r_chunks:
                r = np.concatenate(self._r_chunks)
                c = np.concatenate(self._c_chunks)
                v = np.concatenate(self._v_chunks)
            else:
                r = c = np.zeros(0, dtype=np.int64)
                v = np.zeros(0)
            self._cache["coo"] = (r, c, v)
        return self._cache["coo"]

    @property
    def A(self):
        """Constraint matrix as CSR (duplicates summed)."""
        if "A" not in self._cache:
            r, c, v = self._coo()
            self._cache["A"] = sp.csr_matrix((v, (r, c)), shape=(self._ncons, self._nvars))
        return self._cache["A"]

    @property
    def senses(self):
        if "senses" not in self._cache:
            self._cache["senses"] = (
                np.concatenate(self._sense_chunks) if self._sense_chunks else np.zeros(0, dtype="<U1")
            )
        return self._cache["senses"]

    @property
    def rhs(self):
        if "rhs" not in self._cache:
            self._cache["rhs"] = np.concatenate(self._rhs_chunks) if self._rhs_chunks else np.zeros(0)
        return self._cache["rhs"]

    def constr_name(self, i):
        return self._cnames.name(i)

    def constr_names(self):
        return self._cnames.all(self._ncons)

    # ------------------------------------------------------------- objective
    def add_objective(self, idx, coef):
        idx = np.asarray(idx, dtype=np.int64).ravel()
        coef = np.broadcast_to(np.asarray(coef, dtype=float), idx.shape).ravel()
        self._obj_idx.append(idx)
        self._obj_val.append(coef.copy())
        self._cache.clear()

    @property
    def c(self):
        if "c" not in self._cache:
            c = np.zeros(self._nvars)
            for idx, val in zip(self._obj_idx, self._obj_val):
                np.add.at(c, idx, val)
            self._cache["c"] = c
        return self._cache["c"]

    def objective_value(self, x):
        return float(self.c @ x) + self.obj_constant

    # ------------------------------------------------------------ indicators
    def add_indicator(self, binary, active, forced):
        self.indicators.append(Indicator(int(binary), int(active), int(forced)))
        self._cache.clear()

    # ---------------------------------------------------------------- checks
    def validate(self):
        n = self._nvars
        lb, ub = self.lb, self.ub
        if np.any(np.isnan(lb)) or np.any(np.isnan(ub)):
            raise ModelError("NaN bound")
        bad = np.flatnonzero(lb > ub)
        if bad.size:
            raise ModelError(f"lower bound > upper bound for {self.var_name(int(bad[0]))}")
        b = self.is_binary
        if np.any(lb[b] < 0) or np.any(ub[b] > 1):
            raise ModelError("binary variable bounds outside [0, 1]")
        r, c, v = self._coo()
        if c.size and (c.min() < 0 or c.max() >= n):
            raise ModelError("coefficient references unknown variable")
        if not np.all(np.isfinite(v)):
            raise ModelError("non-finite coefficient")
        if np.any(np.isnan(self.rhs)):
            raise ModelError("NaN right-hand side")
        for idx in self._obj_idx:
            if idx.size and (idx.min() < 0 or idx.max() >= n):
                raise ModelError("objective references unknown variable")
        for ind in self.indicators:
            if not (0 <= ind.binary < n and 0 <= ind.forced < n):
                raise ModelError("indicator references unknown variable")
            if not b[ind.binary]:
                raise ModelError(f"indicator control {self.var_name(ind.binary)} is not binary")
            if b[ind.forced] or lb[ind.forced] < 0:
                raise ModelError(f"indicator target {self.var_name(ind.forced)} must be continuous and nonnegative")
            if ind.active not in (0, 1):
                raise ModelError("indicator active value must be 0 or 1")
        return self

    def max_violation(self, x):
        """Largest absolute violation of rows and bounds at ``x``."""
        x = np.asarray(x, dtype=float)
        viol = 0.0
        if self._nvars:
            viol = max(viol, float(np.max(np.maximum(self.lb - x, 0.0), initial=0.0)))
            viol = max(viol, float(np.max(np.maximum(x - self.ub, 0.0), initial=0.0)))
        if self._ncons:
            act = self.A @ x
            s, b = self.senses, self.rhs
            res = np.where(s == LE, np.maximum(act - b, 0), np.where(s == GE, np.maximum(b - act, 0), np.abs(act - b)))
            viol = max(viol, float(res.max()))
        return viol

    def indicator_violation(self, x):
        worst = 0.0
        for ind in self.indicators:
            if abs(x[ind.binary] - ind.active) < 0.5:
                worst = max(worst, abs(float(x[ind.forced])))
        return worst

    def copy(self):
        m = LinearModel(self.name)
        self._flush_vars()
        m._lb, m._ub, m._bin = self._lb.copy(), self._ub.copy(), self._bin.copy()
        m._nvars = self._nvars
        m._vnames = self._vnames.copy()
        m._r_chunks, m._c_chunks, m._v_chunks = list(self._r_chunks), list(self._c_chunks), list(self._v_chunks)
        m._sense_chunks, m._rhs_chunks = list(self._sense_chunks), list(self._rhs_chunks)
        m._ncons = self._ncons
        m._cnames = self._cnames.copy()
        m._obj_idx, m._obj_val = list(self._obj_idx), list(self._obj_val)
        m.obj_constant = self.obj_constant
        m.indicators = list(self.indicators)
        return m

    def stats(self):
        return {
            "variables": self.num_vars,
            "continuous": self.num_vars - self.num_binaries,
            "binaries": self.num_binaries,
            "constraints": self.num_constrs,
            "indicators": len(self.indicators),
            "nonzeros": int(self.A.nnz),
        }

    def __repr__(self):
        return f"LinearModel({self.name!r}, vars={self.num_vars}, constrs={self.num_constrs}, binaries={self.num_binaries})"
