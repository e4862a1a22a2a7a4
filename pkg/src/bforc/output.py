"""Writers for convergence tables (CSV + JSON metadata), SVG rate plots and legacy VTK."""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import numpy as np

CSV_HEADER = ["n", "h", "ndof", "iters", "err_u_h1", "rate_u", "err_p_l2", "rate_p", "err_T_h1", "rate_T"]
NORM_LABELS = ("|grad e_u|", "|e_p|", "|grad e_T|")
_COLORS = ("#1f77b4", "#d62728", "#2ca02c")


def _num(x) -> str:
    return repr(float(x))


def table_rows(levels) -> list[dict]:
    """Flatten :class:`~bforc.mms.LevelResult` objects into CSV-ready dicts."""
    out = []
    for r in levels:
        rates = r.rates or (None, None, None)
        row = {"n": str(r.n), "h": _num(r.h), "ndof": str(r.ndof), "iters": str(r.iterations)}
        for key, err, rate in zip(("u_h1", "p_l2", "T_h1"), r.errors, rates):
            row[f"err_{key}"] = _num(err)
            row[f"rate_{key.split('_')[0]}"] = "" if rate is None else _num(rate)
        out.append(row)
    return out


def csv_text(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_HEADER, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def rate_metadata(rows: list[dict]) -> dict:
    """Rates against h and the equivalent slopes against Ndof for consecutive rows.

    ``slope_vs_ndof`` is ``-rate_vs_h / 2`` (2D scaling ``Ndof ~ h^-2``);
    ``measured_slope_vs_ndof`` uses the actual Ndof ratio and approaches it
    as the boundary share of the dofs shrinks.
    """
    pairs = []
    for prev, cur in zip(rows, rows[1:]):
        entry = {"n": [int(prev["n"]), int(cur["n"])]}
        for key in ("err_u_h1", "err_p_l2", "err_T_h1"):
            e0, e1 = float(prev[key]), float(cur[key])
            rate_h = math.log(e0 / e1) / math.log(float(prev["h"]) / float(cur["h"]))
            slope_n = math.log(e1 / e0) / math.log(float(cur["ndof"]) / float(prev["ndof"]))
            entry[key] = {"rate_vs_h": rate_h, "slope_vs_ndof": -0.5 * rate_h,
                          "measured_slope_vs_ndof": slope_n}
        pairs.append(entry)
    return {"pairs": pairs}


def write_table(levels, csv_path, json_path=None, extra_meta=None) -> list[dict]:
    rows = table_rows(levels)
    Path(csv_path).write_text(csv_text(rows))
    if json_path is not None:
        meta = dict(extra_meta or {})
        meta.update(rate_metadata(rows))
        Path(json_path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return rows


def emit_plot(rows: list[dict], path, guide_order: float = 1.0, title: str = "") -> None:
    """Log-log SVG of the three error norms against Ndof.

    ``guide_order`` is the exponent of the ``Ndof^-order`` reference line
    (1 for Taylor-Hood, 1/2 for mini).
    """
    if len(rows) < 2:
        raise ValueError("a rate plot needs at least two levels")
    ndof = np.array([float(r["ndof"]) for r in rows])
    errs = np.array([[float(r[k]) for k in ("err_u_h1", "err_p_l2", "err_T_h1")] for r in rows]).T
    if np.any(ndof <= 0) or np.any(errs <= 0):
        raise ValueError("log axes need strictly positive Ndof and errors")

    guide = errs[0, 0] * 2.0 * (ndof / ndof[0]) ** (-guide_order)
    lx = np.log10(ndof)
    ly_all = np.log10(np.concatenate([errs.ravel(), guide]))
    x0, x1 = math.floor(lx.min()), math.ceil(lx.max())
    y0, y1 = math.floor(ly_all.min()), math.ceil(ly_all.max())
    W, H, L, R, T, B = 560, 420, 70, 150, 30, 50

    def px(v):
        return L + (math.log10(v) - x0) / (x1 - x0) * (W - L - R)

    def py(v):
        return H - B - (math.log10(v) - y0) / (y1 - y0) * (H - T - B)

    def pts(xs, ys):
        return " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(xs, ys))

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
           f'viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">',
           f'<title>{title}</title>',
           f'<rect x="{L}" y="{T}" width="{W - L - R}" height="{H - T - B}" fill="none" stroke="black"/>']
    for k in range(x0, x1 + 1):
        x = px(10.0 ** k)
        out.append(f'<line class="tick" x1="{x:.2f}" y1="{H - B}" x2="{x:.2f}" y2="{H - B + 4}" stroke="black"/>')
        out.append(f'<text x="{x:.2f}" y="{H - B + 16}" text-anchor="middle">1e{k}</text>')
    for k in range(y0, y1 + 1):
        y = py(10.0 ** k)
        out.append(f'<line class="tick" x1="{L - 4}" y1="{y:.2f}" x2="{L}" y2="{y:.2f}" stroke="black"/>')
        out.append(f'<text x="{L - 6}" y="{y + 4:.2f}" text-anchor="end">1e{k}</text>')
    out.append(f'<text x="{(W - R + L) / 2:.0f}" y="{H - 12}" text-anchor="middle">Ndof</text>')

    for i, (label, color) in enumerate(zip(NORM_LABELS, _COLORS)):
        out.append(f'<polyline class="series" fill="none" stroke="{color}" stroke-width="1.5" '
                   f'points="{pts(ndof, errs[i])}"/>')
        ly = T + 16 + 16 * i
        out.append(f'<text x="{W - R + 10}" y="{ly}" fill="{color}">{label}</text>')
    order = "1" if guide_order == 1 else f"{guide_order:g}"
    out.append(f'<line class="guide" x1="{px(ndof[0]):.2f}" y1="{py(guide[0]):.2f}" '
               f'x2="{px(ndof[-1]):.2f}" y2="{py(guide[-1]):.2f}" stroke="black" stroke-dasharray="5,4"/>')
    out.append(f'<text x="{W - R + 10}" y="{T + 16 + 16 * 3}">Ndof^-{order}</text>')
    out.append("</svg>")
    Path(path).write_text("\n".join(out) + "\n")


def write_vtk(spaces, state, path, title="bforc solution") -> None:
    """Legacy ASCII VTK of u (padded to 3D), p and T sampled at mesh vertices.

    Vertex dofs come first in every space and all higher-order basis
    functions vanish at vertices, so vertex values are the first ``nv``
    coefficients of each field.
    """
    mesh = spaces.mesh
    nv = mesh.n_vertices
    ns = spaces.velocity.n_scalar
    u = np.column_stack([state.u[:nv], state.u[ns:ns + nv], np.zeros(nv)])
    lines = ["# vtk DataFile Version 2.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {nv} double"]
    lines += [f"{x!r} {y!r} 0.0" for x, y in mesh.vertices.tolist()]
    lines.append(f"CELLS {mesh.n_cells} {4 * mesh.n_cells}")
    lines += [f"3 {a} {b} {c}" for a, b, c in mesh.cells.tolist()]
    lines.append(f"CELL_TYPES {mesh.n_cells}")
    lines += ["5"] * mesh.n_cells
    lines.append(f"POINT_DATA {nv}")
    lines.append("VECTORS u double")
    lines += [f"{a!r} {b!r} {c!r}" for a, b, c in u.tolist()]
    for name, vals in (("p", state.p[:nv]), ("T", state.T[:nv])):
        lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
        lines += [repr(v) for v in vals.tolist()]
    Path(path).write_text("\n".join(lines) + "\n")
