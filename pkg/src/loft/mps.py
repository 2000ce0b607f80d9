"""MPS file reader (fixed and free format).

Sections NAME / OBJSENSE / ROWS / COLUMNS / RHS / RANGES / BOUNDS / ENDATA.
Both classic fixed-column files and free-format files parse, since fields
never contain embedded blanks in either form.  Integer markers and BV
bounds are rejected: the solver handles continuous LPs only.  Duplicate
COLUMNS/RHS entries are summed with a warning.
"""

from __future__ import annotations

import warnings

import numpy as np
import scipy.sparse as sp

from .errors import MpsError
from .model import Sense, UserLp

_SENSES = {"N": None, "L": Sense.LE, "G": Sense.GE, "E": Sense.EQ}
_SECTIONS = {"NAME", "OBJSENSE", "ROWS", "COLUMNS", "RHS", "RANGES",
             "BOUNDS", "ENDATA"}


def _num(tok: str, lineno: int) -> float:
    try:
        return float(tok.replace("D", "E").replace("d", "e"))
    except ValueError:
        raise MpsError(f"line {lineno}: cannot parse number {tok!r}") from None


def read_mps(path: str) -> UserLp:
    name = ""
    obj_name = None
    row_names: list[str] = []
    row_sense: list[Sense] = []
    row_index: dict[str, int] = {}
    col_names: list[str] = []
    col_index: dict[str, int] = {}
    obj_coef: dict[int, float] = {}
    entries: list[tuple[int, int, float]] = []
    rhs: dict[int, float] = {}
    obj_rhs = 0.0
    ranges: dict[int, float] = {}
    lower: dict[int, float] = {}
    upper: dict[int, float] = {}
    explicit_lower: set[int] = set()

    section = None
    duplicates = 0
    saw_endata = False

    try:
        handle = open(path, "r")
    except OSError as exc:
        raise MpsError(f"cannot open {path}: {exc}") from None

    with handle:
        for lineno, raw in enumerate(handle, start=1):
            if not raw.strip() or raw.lstrip().startswith("*"):
                continue
            is_header = not raw[0].isspace()
            fields = raw.split()
            if is_header:
                head = fields[0].upper()
                if head not in _SECTIONS:
                    raise MpsError(f"line {lineno}: unknown section {head!r}")
                section = head
                if head == "NAME":
                    name = fields[1] if len(fields) > 1 else ""
                elif head == "ENDATA":
                    saw_endata = True
                    break
                continue
            if section is None:
                raise MpsError(f"line {lineno}: data before any section header")

            if section == "OBJSENSE":
                if fields[0].upper() in ("MAX", "MAXIMIZE"):
                    raise MpsError("maximisation objectives are not supported")
                continue

            if section == "ROWS":
                kind, rname = fields[0].upper(), fields[1]
                if kind not in _SENSES:
                    raise MpsError(f"line {lineno}: unknown row sense {kind!r}")
                if kind == "N":
                    if obj_name is None:
                        obj_name = rname
                    else:
                        raise MpsError(f"line {lineno}: multiple objective (N) rows")
                    continue
                if rname in row_index:
                    raise MpsError(f"line {lineno}: duplicate row {rname!r}")
                row_index[rname] = len(row_names)
                row_names.append(rname)
                row_sense.append(_SENSES[kind])
                continue

            if section == "COLUMNS":
                if len(fields) >= 3 and fields[1] == "'MARKER'":
                    raise MpsError("integer sections (MARKER) are not supported")
                cname = fields[0]
                if cname not in col_index:
                    col_index[cname] = len(col_names)
                    col_names.append(cname)
                j = col_index[cname]
                pairs = fields[1:]
                if len(pairs) % 2:
                    raise MpsError(f"line {lineno}: odd row/value field count")
                for k in range(0, len(pairs), 2):
                    rname, val = pairs[k], _num(pairs[k + 1], lineno)
                    if rname == obj_name:
                        if j in obj_coef:
                            duplicates += 1
                        obj_coef[j] = obj_coef.get(j, 0.0) + val
                    elif rname in row_index:
                        entries.append((row_index[rname], j, val))
                    else:
                        raise MpsError(f"line {lineno}: unknown row {rname!r}")
                continue

            if section in ("RHS", "RANGES"):
                # first field is the vector name unless the line pairs up
                pairs = fields[1:] if len(fields) % 2 else fields
                store = rhs if section == "RHS" else ranges
                for k in range(0, len(pairs), 2):
                    rname, val = pairs[k], _num(pairs[k + 1], lineno)
                    if rname == obj_name and section == "RHS":
                        obj_rhs = -val  # MPS convention: objective constant
                        continue
                    if rname not in row_index:
                        raise MpsError(f"line {lineno}: unknown row {rname!r}")
                    i = row_index[rname]
                    if i in store:
                        duplicates += 1
                        if section == "RHS":
                            store[i] += val
                            continue
                    store[i] = val
                continue

            if section == "BOUNDS":
                code = fields[0].upper()
                if code in ("FR", "MI", "PL", "BV"):
                    cname = fields[2] if len(fields) > 2 else fields[-1]
                    val = None
                else:
                    if len(fields) < 4:
                        raise MpsError(f"line {lineno}: bound line too short")
                    cname = fields[2]
                    val = _num(fields[3], lineno)
                if cname not in col_index:
                    raise MpsError(f"line {lineno}: unknown column {cname!r}")
                j = col_index[cname]
                if code == "UP":
                    upper[j] = val
                    if val < 0 and j not in explicit_lower:
                        # de-facto MPS convention: a negative upper bound on a
                        # default-lower column frees the lower bound
                        warnings.warn(
                            f"negative UP bound on {cname} with no explicit "
                            "lower bound: lower set to -inf")
                        lower[j] = -np.inf
                elif code == "LO":
                    lower[j] = val
                    explicit_lower.add(j)
                elif code == "FX":
                    lower[j] = upper[j] = val
                    explicit_lower.add(j)
                elif code == "FR":
                    lower[j] = -np.inf
                    upper[j] = np.inf
                    explicit_lower.add(j)
                elif code == "MI":
                    lower[j] = -np.inf
                    explicit_lower.add(j)
                elif code == "PL":
                    upper[j] = np.inf
                elif code == "BV":
                    raise MpsError("binary (BV) bounds are not supported")
                else:
                    raise MpsError(f"line {lineno}: unknown bound code {code!r}")
                continue

            raise MpsError(f"line {lineno}: data in unsupported section {section}")

    if not saw_endata:
        raise MpsError("missing ENDATA")
    if obj_name is None:
        raise MpsError("no objective (N) row declared")
    if not row_names:
        raise MpsError("no constraint rows declared")
    if not col_names:
        raise MpsError("no columns declared")
    if duplicates:
        warnings.warn(f"{duplicates} duplicate MPS entries were summed")

    m, n = len(row_names), len(col_names)
    rows = np.array([e[0] for e in entries], dtype=np.int64)
    cols = np.array([e[1] for e in entries], dtype=np.int64)
    vals = np.array([e[2] for e in entries])
    before = len(vals)
    A = sp.csc_matrix((vals, (rows, cols)), shape=(m, n))
    A.sum_duplicates()
    if A.nnz < before:
        warnings.warn(f"{before - A.nnz} duplicate matrix entries were summed")

    c = np.zeros(n)
    for j, v in obj_coef.items():
        c[j] = v
    b = np.zeros(m)
    for i, v in rhs.items():
        b[i] = v
    rng = np.full(m, np.nan)
    for i, v in ranges.items():
        rng[i] = v
    lo = np.zeros(n)
    up = np.full(n, np.inf)
    for j, v in lower.items():
        lo[j] = v
    for j, v in upper.items():
        up[j] = v

    lp = UserLp(A=A, senses=row_sense, rhs=b, c=c, lower=lo, upper=up,
                ranges=rng, obj_offset=obj_rhs, name=name,
                row_names=row_names, col_names=col_names)
    lp.validate()
    return lp
