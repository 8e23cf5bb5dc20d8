"""Trace rows and their CSV serialization.

One record per integrator step. The column layout is the contract between
the simulator and everything downstream (plotting, acceptance checks), so
it is generated in exactly one place and kept stable:

    t,
    per agent k (1-based):        pk_x, pk_y, thk, vk, wk,
    per controllable agent i:     hi_true, hi_hat, ei, rhoi, thetai,
                                  rhati, slacki, eventi,
    per (i, l) estimate pair:     esterr_i_l.

Floats are written with 9 significant digits; events are small integer
bitmasks written as plain integers.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

EVENT_FUNNEL_VIOLATION = 1
EVENT_CBF_RELAXED = 2
EVENT_QP_INFEASIBLE = 4

_FLOAT_FMT = "%.9g"


@dataclass(frozen=True)
class TraceRecord:
    """Everything logged about one step, before serialization.

    states: (M, 3) plant states; inputs: (M, 2) applied inputs; the
    per-agent diagnostic arrays cover the N controllable agents and
    est_err is the (N, M) table of estimate error norms.
    """

    t: float
    states: NDArray[np.float64]
    inputs: NDArray[np.float64]
    h_true: NDArray[np.float64]
    h_hat: NDArray[np.float64]
    err: NDArray[np.float64]
    rho: NDArray[np.float64]
    theta: NDArray[np.float64]
    r_hat: NDArray[np.float64]
    slack: NDArray[np.float64]
    events: NDArray[np.int64]
    est_err: NDArray[np.float64]


def trace_columns(n_total: int, n_controllable: int) -> list[str]:
    cols = ["t"]
    for k in range(1, n_total + 1):
        cols += [f"p{k}_x", f"p{k}_y", f"th{k}", f"v{k}", f"w{k}"]
    for i in range(1, n_controllable + 1):
        cols += [
            f"h{i}_true",
            f"h{i}_hat",
            f"e{i}",
            f"rho{i}",
            f"theta{i}",
            f"rhat{i}",
            f"slack{i}",
            f"event{i}",
        ]
    for i in range(1, n_controllable + 1):
        for l in range(1, n_total + 1):
            cols.append(f"esterr_{i}_{l}")
    return cols


def record_to_row(r: TraceRecord) -> list[str]:
    m = r.states.shape[0]
    n = r.h_true.shape[0]
    row = [_FLOAT_FMT % r.t]
    for k in range(m):
        row += [_FLOAT_FMT % v for v in r.states[k]]
        row += [_FLOAT_FMT % v for v in r.inputs[k]]
    for i in range(n):
        row += [
            _FLOAT_FMT % r.h_true[i],
            _FLOAT_FMT % r.h_hat[i],
            _FLOAT_FMT % r.err[i],
            _FLOAT_FMT % r.rho[i],
            _FLOAT_FMT % r.theta[i],
            _FLOAT_FMT % r.r_hat[i],
            _FLOAT_FMT % r.slack[i],
            "%d" % r.events[i],
        ]
    for i in range(n):
        row += [_FLOAT_FMT % v for v in r.est_err[i]]
    return row


def write_trace(records, path, n_total=None, n_controllable=None) -> None:
    """CSV with the documented column layout; empty records give a
    header-only file. Agent counts are read off the first record when not
    given; an empty record list needs them spelled out so the header can
    still be produced. Shapes are validated against the declared sizes so a
    malformed record fails loudly instead of writing a ragged row."""
    records = list(records)
    if records:
        n_total = records[0].states.shape[0] if n_total is None else n_total
        n_controllable = (
            records[0].h_true.shape[0] if n_controllable is None else n_controllable
        )
    elif n_total is None or n_controllable is None:
        raise ValueError(
            "an empty trace needs explicit agent counts to produce its header"
        )
    cols = trace_columns(n_total, n_controllable)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(cols)
        for r in records:
            if r.states.shape != (n_total, 3) or r.h_true.shape != (n_controllable,):
                raise ValueError(
                    "trace record shapes do not match the declared agent counts"
                )
            row = record_to_row(r)
            if len(row) != len(cols):
                raise ValueError(
                    "trace record produced a row of unexpected width"
                )
            writer.writerow(row)


def read_trace(path) -> tuple[list[str], NDArray[np.float64]]:
    """Header and a (rows, columns) float array; events parse as floats."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(v) for v in row] for row in reader if row]
    data = np.array(rows, dtype=float) if rows else np.empty((0, len(header)))
    return header, data
