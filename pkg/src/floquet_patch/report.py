"""Writers for summaries, CSV tables and plot scripts."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import __version__

__all__ = ["jsonable", "summary_text", "write_summary", "write_table", "emit_orbit_plot", "emit_trace_plot"]


def jsonable(obj):
    """Recursively convert numpy scalars/arrays and complex numbers for JSON."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (complex, np.complexfloating)):
        return {"re": float(obj.real), "im": float(obj.imag)}
    if isinstance(obj, np.generic):
        return jsonable(obj.item())
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    return obj


def summary_text(command: str, config_hash: str, body: dict) -> str:
    head = f"floquet-patch {__version__}\ncommand: {command}\nconfig-sha256: {config_hash}\n"
    return head + json.dumps(jsonable(body), indent=2) + "\n"


def write_summary(out_dir: Path, command: str, config_hash: str, body: dict) -> str:
    text = summary_text(command, config_hash, body)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "summary.txt").write_text(text)
    return text


def write_table(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def emit_orbit_plot(out_dir: Path, ts, ys, names: Sequence[str], equilibrium=None, stem: str = "orbit",
                    title: str = "phase plane") -> tuple[Path, Path]:
    """Write ``<stem>.csv`` (+ ``<stem>_equilibrium.csv``) and a gnuplot script ``<stem>.gp``."""
    ys = np.asarray(ys, dtype=float)
    if ys.size == 0 or len(ts) == 0:
        raise ValueError("empty trajectory: nothing to plot")
    out_dir = Path(out_dir)
    data = out_dir / f"{stem}.csv"
    write_table(data, ["t", *names], ([t, *y] for t, y in zip(ts, ys)))
    lines = [
        "set datafile separator ','",
        f"set title '{title}'",
        f"set xlabel '{names[0]}'",
        f"set ylabel '{names[1] if len(names) > 1 else 't'}'",
        "set key off",
    ]
    plot = [f"'{data.name}' using 2:3 every ::1 with lines lw 2 lc rgb 'blue'"]
    if equilibrium is not None:
        eq = out_dir / f"{stem}_equilibrium.csv"
        write_table(eq, list(names), [list(equilibrium)])
        plot.append(f"'{eq.name}' using 1:2 every ::1 with points pt 7 lc rgb 'red'")
    lines.append("plot " + ", \\\n     ".join(plot))
    script = out_dir / f"{stem}.gp"
    script.write_text("\n".join(lines) + "\n")
    return data, script


def emit_trace_plot(out_dir: Path, trace, stem: str = "lle_trace", title: str = "running LLE estimate"):
    """Write the LLE convergence trace ``t, estimate`` and a gnuplot script."""
    trace = np.asarray(trace, dtype=float)
    if trace.size == 0:
        raise ValueError("empty trace: nothing to plot")
    out_dir = Path(out_dir)
    data = out_dir / f"{stem}.csv"
    write_table(data, ["t", "lle_estimate"], trace.tolist())
    script = out_dir / f"{stem}.gp"
    script.write_text(
        "set datafile separator ','\n"
        f"set title '{title}'\nset xlabel 't'\nset ylabel 'estimate'\nset key off\n"
        f"plot '{data.name}' using 1:2 every ::1 with lines\n"
    )
    return data, script
