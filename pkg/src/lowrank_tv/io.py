"""Plain-text formats for matrices, 2-D samples and fitted densities."""

from __future__ import annotations

import numpy as np

from lowrank_tv.density import PiecewiseDensity2D


class ParseError(ValueError):
    """Malformed input file; carries the 1-based line and column."""

    def __init__(self, path, line: int, col: int, msg: str):
        super().__init__(f"{path}:{line}:{col}: {msg}")
        self.line, self.col = line, col


def _float(tok: str, path, line: int, col: int) -> float:
    try:
        v = float(tok)
    except ValueError:
        raise ParseError(path, line, col, f"not a number: {tok!r}") from None
    if not np.isfinite(v):
        raise ParseError(path, line, col, f"non-finite value {tok!r}")
    return v


def read_matrix(path) -> np.ndarray:
    """Header ``d1 d2`` followed by ``d1`` rows of ``d2`` numbers."""
    with open(path) as fh:
        lines = [ln for ln in fh.read().splitlines()]
    rows = [(i + 1, ln.split()) for i, ln in enumerate(lines) if ln.strip()]
    if not rows:
        raise ParseError(path, 1, 1, "empty file")
    lineno, head = rows[0]
    if len(head) != 2 or not all(t.isdigit() for t in head):
        raise ParseError(path, lineno, 1, "header must be two positive integers 'd1 d2'")
    d1, d2 = int(head[0]), int(head[1])
    if d1 < 1 or d2 < 1:
        raise ParseError(path, lineno, 1, "dimensions must be positive")
    body = rows[1:]
    if len(body) != d1:
        ln = body[-1][0] + 1 if body else lineno + 1
        raise ParseError(path, ln, 1, f"expected {d1} rows, found {len(body)}")
    out = np.empty((d1, d2))
    for r, (ln, toks) in enumerate(body):
        if len(toks) != d2:
            raise ParseError(path, ln, 1, f"expected {d2} columns, found {len(toks)}")
        for c, t in enumerate(toks):
            out[r, c] = _float(t, path, ln, c + 1)
    return out


def write_matrix(path, m) -> None:
    m = np.asarray(m, dtype=float)
    with open(path, "w") as fh:
        fh.write(f"{m.shape[0]} {m.shape[1]}\n")
        for row in m:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def read_samples(path) -> np.ndarray:
    """Two whitespace-separated numbers per line."""
    pts = []
    with open(path) as fh:
        for i, ln in enumerate(fh, start=1):
            toks = ln.split()
            if not toks:
                continue
            if len(toks) != 2:
                raise ParseError(path, i, 1, f"expected 2 columns, found {len(toks)}")
            pts.append((_float(toks[0], path, i, 1), _float(toks[1], path, i, 2)))
    return np.array(pts, dtype=float).reshape(-1, 2)


def write_samples(path, x) -> None:
    with open(path, "w") as fh:
        for a, b in np.asarray(x, dtype=float):
            fh.write(f"{float(a)!r} {float(b)!r}\n")


def _fmt(vals) -> str:
    return " ".join(repr(float(v)) for v in vals)


def write_density(path, f: PiecewiseDensity2D) -> None:
    """Header (branch, support, cell widths, index ranges), edges, then values row by row."""
    t = f.trace
    support = t.get("support", (np.nan,) * 4)
    h = t.get("h", (np.nan, np.nan))
    e1, e2 = t.get("E1", ("-", "-")), t.get("E2", ("-", "-"))
    nx, ny = f.values.shape
    with open(path, "w") as fh:
        fh.write(f"branch {f.branch}\n")
        fh.write(f"estimator {t.get('estimator', '-')}\n")
        fh.write(f"support {_fmt(support)}\n")
        fh.write(f"h {_fmt(h)}\n")
        fh.write(f"E1 {e1[0]} {e1[1]}\n")
        fh.write(f"E2 {e2[0]} {e2[1]}\n")
        fh.write(f"x_edges {_fmt(f.x_edges)}\n")
        fh.write(f"y_edges {_fmt(f.y_edges)}\n")
        fh.write(f"values {nx} {ny}\n")
        for row in f.values:
            fh.write(_fmt(row) + "\n")


def read_density(path) -> PiecewiseDensity2D:
    with open(path) as fh:
        lines = fh.read().splitlines()
    fields, k = {}, 0
    while k < len(lines) and not lines[k].startswith("values"):
        toks = lines[k].split()
        if toks:
            fields[toks[0]] = toks[1:]
        k += 1
    if k == len(lines):
        raise ParseError(path, k, 1, "missing 'values' line")
    for key in ("branch", "x_edges", "y_edges"):
        if key not in fields:
            raise ParseError(path, 1, 1, f"missing '{key}' line")
    nx, ny = (int(v) for v in lines[k].split()[1:3])
    vals = np.array([[_float(t, path, k + 2 + i, j + 1) for j, t in enumerate(ln.split())]
                     for i, ln in enumerate(lines[k + 1:k + 1 + nx])])
    if vals.shape != (nx, ny):
        raise ParseError(path, k + 1, 1, f"expected a {nx}x{ny} value block")
    trace = {"estimator": fields.get("estimator", ["-"])[0]}
    if "support" in fields:
        trace["support"] = tuple(float(v) for v in fields["support"])
    return PiecewiseDensity2D(np.array([float(v) for v in fields["x_edges"]]),
                              np.array([float(v) for v in fields["y_edges"]]),
                              vals, fields["branch"][0], None, trace)
