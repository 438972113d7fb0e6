"""Fixed-format MPS writer."""

import numpy as np

from .model import EQ, GE, LE, ModelError

_SENSE = {LE: "L", GE: "G", EQ: "E"}


def _num(v):
    return format(float(v), ".12g")


def _field(name, what):
    if not name or any(ch.isspace() for ch in name):
        raise ModelError(f"{what} name {name!r} is empty or contains whitespace")
    return name


def export_mps(model, obj_name="COST"):
    """Return the model as fixed-format MPS text (objective minimised).

    Indicator links are not representable in plain MPS and raise; export the
    big-M form instead. Binaries are written inside MARKER INTORG blocks with
    explicit [0, 1] bounds. The objective constant goes into the RHS entry of
    the objective row (negated, per MPS convention).
    """
    if model.indicators:
        raise ModelError("indicator links cannot be exported to MPS; use the big-M embedding")
    model.validate()
    vnames = [_field(n, "variable") for n in model.var_names()]
    cnames = [_field(n, "constraint") for n in model.constr_names()]
    if len(set(vnames)) != len(vnames):
        raise ModelError("duplicate variable names")
    A = model.A.tocsc()
    c = model.c
    out = [f"NAME          {model.name}", "ROWS", f" N  {obj_name}"]
    for name, s in zip(cnames, model.senses):
        out.append(f" {_SENSE[s]}  {name}")
    out.append("COLUMNS")
    binary = model.is_binary
    in_int = False
    marker = 0
    for j, name in enumerate(vnames):
        if binary[j] and not in_int:
            out.append(f"    MARKER{marker:<4d}'MARKER'                 'INTORG'")
            in_int = True
        elif not binary[j] and in_int:
            out.append(f"    MARKER{marker:<4d}'MARKER'                 'INTEND'")
            marker += 1
            in_int = False
        entries = []
        if c[j] != 0:
            entries.append((obj_name, c[j]))
        lo, hi = A.indptr[j], A.indptr[j + 1]
        for i, v in zip(A.indices[lo:hi], A.data[lo:hi]):
            entries.append((cnames[i], v))
        if not entries:
            # keep the column visible so bounds refer to a declared variable
            entries.append((obj_name, 0.0))
        for row, v in entries:
            out.append(f"    {name:<8s}  {row:<8s}  {_num(v):>12s}")
    if in_int:
        out.append(f"    MARKER{marker:<4d}'MARKER'                 'INTEND'")
    out.append("RHS")
    rhs = model.rhs
    for name, v in zip(cnames, rhs):
        if v != 0:
            out.append(f"    RHS       {name:<8s}  {_num(v):>12s}")
    if model.obj_constant:
        out.append(f"    RHS       {obj_name:<8s}  {_num(-model.obj_constant):>12s}")
    out.append("BOUNDS")
    lb, ub = model.lb, model.ub
    for j, name in enumerate(vnames):
        lo, hi = lb[j], ub[j]
        if binary[j]:
            out.append(f" LO BND       {name:<8s}  {_num(lo):>12s}")
            out.append(f" UP BND       {name:<8s}  {_num(hi):>12s}")
            continue
        if lo == hi:
            out.append(f" FX BND       {name:<8s}  {_num(lo):>12s}")
            continue
        if np.isneginf(lo) and np.isposinf(hi):
            out.append(f" FR BND       {name}")
            continue
        if np.isneginf(lo):
            out.append(f" MI BND       {name}")
        elif lo != 0:
            out.append(f" LO BND       {name:<8s}  {_num(lo):>12s}")
        if np.isfinite(hi):
            out.append(f" UP BND       {name:<8s}  {_num(hi):>12s}")
    out.append("ENDATA")
    return "\n".join(out) + "\n"
