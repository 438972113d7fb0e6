"""Exact MILP encoding of a trained ReLU network.

Each hidden neuron j of layer l gets a split ``a = hp - hn`` with
``hp, hn >= 0`` and a binary ``z``: z = 1 switches the neuron off (hp = 0),
z = 0 switches it on (hn = 0). The switch is written either as indicator
links or as big-M rows using interval bounds on ``a``. Input and target
normalization is folded into the first layer and the output row, so the
model reads and writes physical units.

Per embedded copy with N hidden neurons and no presolve:

    mode       continuous   binaries   rows        indicator links
    indicator  2N + 1       N          N + 1       2N
    big-M      2N + 1       N          3N + 1      0

``explicit_preactivation=True`` adds a variable ``a`` per neuron (the split
then reads ``a = hp - hn`` with ``a`` defined by its own row): +N continuous
and +N rows.
"""

from dataclasses import dataclass, field

import numpy as np

from .optim import OPTIMAL, GAP_REACHED, solve_milp
from .optim.model import LinearModel, ModelError

MODES = ("indicator", "bigm")


@dataclass
class NeuronBounds:
    lower: list  # per hidden layer, pre-activation lower bounds
    upper: list
    out_lower: float = -np.inf
    out_upper: float = np.inf

    def tighter_than(self, other, tol=1e-9):
        return all(
            np.all(lo >= olo - tol) and np.all(hi <= ohi + tol)
            for lo, hi, olo, ohi in zip(self.lower, self.upper, other.lower, other.upper)
        )


def _folded_layers(net, fixed=None):
    """Layer weights in physical input/output units.

    Returns (Ws, bs, out_scale, out_shift): first-layer weights absorb the
    input normalization; ``fixed`` (position -> value) inputs are moved into
    the first bias, and their weight columns are zeroed.
    """
    s = net.norm
    W0 = net.weights[0] / s.x_scale[None, :]
    b0 = net.biases[0] - W0 @ s.x_shift
    if fixed:
        pos = np.array(sorted(fixed), dtype=np.int64)
        vals = np.array([fixed[k] for k in pos], dtype=float)
        b0 = b0 + W0[:, pos] @ vals
        W0 = W0.copy()
        W0[:, pos] = 0.0
    Ws = [W0] + [W.copy() for W in net.weights[1:]]
    bs = [b0] + [b.copy() for b in net.biases[1:]]
    return Ws, bs, s.y_scale, s.y_shift


def propagate_bounds(net, lo, hi):
    """Interval bounds on every hidden pre-activation over the input box [lo, hi]."""
    lo = np.asarray(lo, float)
    hi = np.asarray(hi, float)
    if lo.shape != (net.n_inputs,) or hi.shape != (net.n_inputs,):
        raise ValueError("input box does not match the network's input size")
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise ValueError("input box must be finite")
    if np.any(lo > hi):
        raise ValueError("input box has lo > hi")
    Ws, bs, ys, yb = _folded_layers(net)
    h_lo, h_hi = lo, hi
    lower, upper = [], []
    for W, b in zip(Ws[:-1], bs[:-1]):
        Wp, Wn = np.maximum(W, 0), np.minimum(W, 0)
        a_lo = Wp @ h_lo + Wn @ h_hi + b
        a_hi = Wp @ h_hi + Wn @ h_lo + b
        lower.append(a_lo)
        upper.append(a_hi)
        h_lo, h_hi = np.maximum(a_lo, 0), np.maximum(a_hi, 0)
    W, b = Ws[-1], bs[-1]
    Wp, Wn = np.maximum(W, 0), np.minimum(W, 0)
    o_lo = float((Wp @ h_lo + Wn @ h_hi + b)[0])
    o_hi = float((Wp @ h_hi + Wn @ h_lo + b)[0])
    if ys > 0:
        o_lo, o_hi = o_lo * ys + yb, o_hi * ys + yb
    return NeuronBounds(lower, upper, o_lo, o_hi)


@dataclass
class EmbeddedNetwork:
    output: int  # variable index of the prediction
    inputs: list  # variable index per input position (None for fixed inputs)
    hp: list  # per layer, index array (-1 where the neuron was presolved away)
    hn: list
    z: list
    pre: list  # explicit pre-activation variables (or empty)
    bounds: NeuronBounds
    manifest: dict = field(default_factory=dict)
    out_scale: float = 1.0  # prediction = out_scale * x[output] + out_shift
    out_shift: float = 0.0

    def prediction(self, x):
        return self.out_scale * float(np.asarray(x)[self.output]) + self.out_shift

    @property
    def binaries(self):
        return np.concatenate([zz[zz >= 0] for zz in self.z]) if self.z else np.zeros(0, dtype=np.int64)


def embed(net, model, input_vars, mode="indicator", bounds=None, fixed=None, input_box=None,
          presolve=True, explicit_preactivation=False, output_units="physical", prefix="nn"):
    """Add the network to ``model``; returns handles to the new variables.

    ``input_vars[k]`` is the variable feeding input k (ignored where ``fixed``
    gives a constant). Bounds come from ``bounds`` or are propagated from
    ``input_box`` / the input variables' own bounds.

    With ``output_units="normalized"`` the output variable holds the
    network's raw (standardized) prediction and ``EmbeddedNetwork.out_scale``
    / ``out_shift`` map it back; callers put the scale into the objective.
    This keeps large target scales out of the constraint matrix.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    if output_units not in ("physical", "normalized"):
        raise ValueError("output_units must be 'physical' or 'normalized'")
    fixed = dict(fixed or {})
    if len(input_vars) != net.n_inputs:
        raise ModelError(f"network expects {net.n_inputs} inputs, got {len(input_vars)}")
    if bounds is None:
        if input_box is not None:
            lo, hi = (np.asarray(v, float).copy() for v in input_box)
        else:
            lo = np.array([model.lb[v] if v is not None else 0.0 for v in input_vars], dtype=float)
            hi = np.array([model.ub[v] if v is not None else 0.0 for v in input_vars], dtype=float)
        for k, v in fixed.items():
            lo[k] = hi[k] = v
        if np.all(np.isfinite(lo)) and np.all(np.isfinite(hi)):
            bounds = propagate_bounds(net, lo, hi)
        elif mode == "bigm":
            raise ModelError("big-M mode needs finite input bounds")
    if bounds is None and presolve:
        presolve = False

    Ws, bs, ys, yb = _folded_layers(net, fixed)
    inputs = [None if k in fixed else int(v) for k, v in enumerate(input_vars)]
    # previous layer as (index array, coefficient-carrying mask); constants fold into the bias
    prev_idx = np.array([-1 if v is None else v for v in inputs], dtype=np.int64)
    n_before = (model.num_vars, model.num_binaries, model.num_constrs, len(model.indicators))
    hp_all, hn_all, z_all, pre_all = [], [], [], []
    stable_on = stable_off = 0
    for l, (W, b) in enumerate(zip(Ws[:-1], bs[:-1])):
        n = W.shape[0]
        lo = bounds.lower[l] if bounds is not None else np.full(n, -np.inf)
        hi = bounds.upper[l] if bounds is not None else np.full(n, np.inf)
        on = (lo >= 0) if presolve else np.zeros(n, dtype=bool)
        off = (hi <= 0) & ~on if presolve else np.zeros(n, dtype=bool)
        split = ~on & ~off
        stable_on += int(on.sum())
        stable_off += int(off.sum())

        hp = np.full(n, -1, dtype=np.int64)
        hn = np.full(n, -1, dtype=np.int64)
        z = np.full(n, -1, dtype=np.int64)
        pre = np.full(n, -1, dtype=np.int64)
        up = np.maximum(hi, 0.0)
        dn = np.maximum(-lo, 0.0)
        live = ~off
        if live.any():
            hp[live] = model.add_vars(f"{prefix}_hp{l}", int(live.sum()), 0.0, up[live]).ravel()
        if split.any():
            k = int(split.sum())
            hn[split] = model.add_vars(f"{prefix}_hn{l}", k, 0.0, dn[split]).ravel()
            z[split] = model.add_vars(f"{prefix}_z{l}", k, binary=True).ravel()
        if explicit_preactivation and live.any():
            pre[live] = model.add_vars(f"{prefix}_a{l}", int(live.sum()), lo[live], hi[live]).ravel()

        # affine row per live neuron:  W h_prev + b = hp - hn   (or = a, then a = hp - hn)
        src = np.flatnonzero(prev_idx >= 0)
        rows_live = np.flatnonzero(live)
        if rows_live.size:
            Wl = W[rows_live][:, src]
            rr, cc = np.nonzero(Wl)
            r_loc = list(rr)
            c_loc = list(prev_idx[src][cc])
            v_loc = list(Wl[rr, cc])
            target = pre[rows_live] if explicit_preactivation else None
            for k, j in enumerate(rows_live):
                if explicit_preactivation:
                    r_loc.append(k); c_loc.append(target[k]); v_loc.append(-1.0)
                else:
                    r_loc.append(k); c_loc.append(hp[j]); v_loc.append(-1.0)
                    if hn[j] >= 0:
                        r_loc.append(k); c_loc.append(hn[j]); v_loc.append(1.0)
            model.add_constrs(f"{prefix}_aff{l}", rows_live.size, r_loc, c_loc, v_loc, "=", -b[rows_live])
            if explicit_preactivation:
                r2, c2, v2 = [], [], []
                for k, j in enumerate(rows_live):
                    r2 += [k, k]; c2 += [pre[j], hp[j]]; v2 += [1.0, -1.0]
                    if hn[j] >= 0:
                        r2.append(k); c2.append(hn[j]); v2.append(1.0)
                model.add_constrs(f"{prefix}_split{l}", rows_live.size, r2, c2, v2, "=", 0.0)

        for j in np.flatnonzero(split):
            if mode == "indicator":
                model.add_indicator(int(z[j]), 1, int(hp[j]))
                model.add_indicator(int(z[j]), 0, int(hn[j]))
        if mode == "bigm" and split.any():
            idx = np.flatnonzero(split)
            k = idx.size
            r = np.arange(k)
            model.add_constrs(f"{prefix}_mup{l}", k, np.concatenate([r, r]),
                              np.concatenate([hp[idx], z[idx]]), np.concatenate([np.ones(k), up[idx]]),
                              "<", up[idx])
            model.add_constrs(f"{prefix}_mdn{l}", k, np.concatenate([r, r]),
                              np.concatenate([hn[idx], z[idx]]), np.concatenate([np.ones(k), -dn[idx]]),
                              "<", 0.0)
        hp_all.append(hp); hn_all.append(hn); z_all.append(z); pre_all.append(pre)
        prev_idx = hp  # dead neurons (-1) contribute nothing downstream

    # output: q = ys * (W h_L + b) + yb, or the bracket alone in normalized units
    W, b = Ws[-1], bs[-1]
    lo_out = bounds.out_lower if bounds is not None else -np.inf
    hi_out = bounds.out_upper if bounds is not None else np.inf
    out_scale, out_shift = 1.0, 0.0
    if output_units == "normalized":
        out_scale, out_shift = ys, yb
        lo_out, hi_out = (lo_out - yb) / ys, (hi_out - yb) / ys
        ys, yb = 1.0, 0.0
    q = model.add_var(f"{prefix}_out", lb=lo_out if np.isfinite(lo_out) else -np.inf,
                      ub=hi_out if np.isfinite(hi_out) else np.inf)
    src = np.flatnonzero(prev_idx >= 0)
    terms = {int(prev_idx[k]): float(ys * W[0, k]) for k in src if W[0, k] != 0.0}
    terms[q] = -1.0
    model.add_constr(terms, "=", -(ys * b[0] + yb), name=f"{prefix}_outrow")

    n_after = (model.num_vars, model.num_binaries, model.num_constrs, len(model.indicators))
    n_cont = (n_after[0] - n_before[0]) - (n_after[1] - n_before[1])
    manifest = {
        "architecture": net.architecture,
        "mode": mode,
        "presolve": bool(presolve),
        "explicit_preactivation": bool(explicit_preactivation),
        "hidden_neurons": int(sum(net.hidden)),
        "continuous": int(n_cont),
        "binaries": int(n_after[1] - n_before[1]),
        "constraints": int(n_after[2] - n_before[2]),
        "indicators": int(n_after[3] - n_before[3]),
        "stable_active": stable_on,
        "stable_inactive": stable_off,
    }
    return EmbeddedNetwork(q, inputs, hp_all, hn_all, z_all,
                           pre_all if explicit_preactivation else [], bounds, manifest,
                           float(out_scale), float(out_shift))


def copy_size(hidden_neurons, mode="indicator", explicit_preactivation=False):
    """Closed-form per-copy counts without presolve (see the module docstring)."""
    N = int(hidden_neurons)
    cont = 2 * N + 1 + (N if explicit_preactivation else 0)
    rows = N + 1 + (N if explicit_preactivation else 0) + (2 * N if mode == "bigm" else 0)
    return {"continuous": cont, "binaries": N, "constraints": rows,
            "indicators": 2 * N if mode == "indicator" else 0}


def verify_embedding(net, samples, mode="indicator", box=None, presolve=True, engine="bnb",
                     lp_method="auto", relative=False):
    """Worst |MILP output - forward(x)| over the samples, with inputs fixed.

    The network is embedded once over ``box`` (default: the samples' bounding
    box); for each sample the input variables are pinned and the MILP solved.
    With ``relative=True`` each deviation is divided by 1 + |forward(x)|.
    """
    samples = np.atleast_2d(np.asarray(samples, float))
    lo, hi = (samples.min(axis=0), samples.max(axis=0)) if box is None else map(np.asarray, box)
    m = LinearModel("verify")
    xs = m.add_vars("x", net.n_inputs, lo, hi)
    emb = embed(net, m, list(xs), mode=mode, presolve=presolve)
    m.add_objective([emb.output], [1.0])
    worst = 0.0
    base_lb, base_ub = m.lb.copy(), m.ub.copy()
    details = []
    for x in samples:
        m.set_bounds(xs, lb=x, ub=x)
        rep = solve_milp(m, rel_gap=1e-9, engine=engine, lp_method=lp_method) if engine == "bnb" \
            else solve_milp(m, rel_gap=1e-9, engine=engine)
        if rep.status not in (OPTIMAL, GAP_REACHED):
            raise RuntimeError(f"embedding infeasible at a fixed input (status {rep.status})")
        want = net.forward(x)
        dev = abs(rep.x[emb.output] - want)
        if relative:
            dev /= 1.0 + abs(want)
        worst = max(worst, dev)
        details.append((rep, want))
    m.set_bounds(xs, lb=base_lb[xs], ub=base_ub[xs])
    verify_embedding.last = (m, emb, details)
    return worst
