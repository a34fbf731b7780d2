"""Deterministic CSV/JSON serialisation of detection results."""

from __future__ import annotations

import csv
import io
import json
from typing import Sequence

from .core import fmt_number, fmt_vector

COLUMNS = ("mechanism", "epsilon0", "test_epsilon", "category", "d1", "d2", "args", "event",
           "c1", "c2", "n", "p_top", "p_bot", "min_p", "seconds")


def _p(x: float) -> str:
    return repr(float(x))


def row(result, timing: bool = True) -> dict:
    """One result as ordered string fields.

    A failed point leaves the counterexample fields empty and carries its
    message in ``event`` as ``error:<message>``.
    """
    r = result
    base = {
        "mechanism": r.mechanism,
        "epsilon0": fmt_number(r.epsilon0),
        "test_epsilon": fmt_number(r.test_epsilon),
    }
    if r.error is not None:
        base.update({k: "" for k in COLUMNS[3:]})
        base["event"] = f"error:{r.error}"
        return base
    base.update({
        "category": r.pair.category.value,
        "d1": fmt_vector(r.pair.d1),
        "d2": fmt_vector(r.pair.d2),
        "args": r.args.describe(),
        "event": str(r.event),
        "c1": str(r.c1),
        "c2": str(r.c2),
        "n": str(r.n),
        "p_top": _p(r.p_top),
        "p_bot": _p(r.p_bot),
        "min_p": _p(r.min_p),
        "seconds": f"{r.seconds:.3f}" if timing else "",
    })
    return base


def to_csv(results: Sequence, timing: bool = True) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=COLUMNS, lineterminator="\n")
    writer.writeheader()
    for r in results:
        writer.writerow(row(r, timing))
    return buf.getvalue()


def report(results: Sequence, config=None, timing: bool = True) -> dict:
    """Counterexample report: config echo for replay plus one entry per grid point."""
    rows = []
    for r in results:
        entry = row(r, timing)
        for key in ("epsilon0", "test_epsilon"):
            entry[key] = float(entry[key])
        if r.error is None:
            entry.update({"c1": r.c1, "c2": r.c2, "n": r.n, "p_top": r.p_top, "p_bot": r.p_bot,
                          "min_p": r.min_p, "seconds": round(r.seconds, 3) if timing else None})
            entry["error"] = None
        else:
            entry["error"] = r.error
        rows.append(entry)
    return {"config": config.echo() if config is not None else None, "results": rows}


def to_json(results: Sequence, config=None, timing: bool = True) -> str:
    return json.dumps(report(results, config, timing), indent=2) + "\n"


def read_csv(text: str) -> list:
    return list(csv.DictReader(io.StringIO(text)))
