"""Timing comparison of the kernel backends.

Measures the two hot calls (vector field, control snapshot) on the bundled
four-robot scenario and a short closed-loop run, for the pure-numpy backend
and the compiled one when it is built. Run from a checkout:

    python3 benchmarks/bench_backends.py [--repeats N] [--seconds T]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from rcbfsim.engine import MODE_DISTRIBUTED, build_kernel_spec, initial_flat_state, run
from rcbfsim.scenario import load_bundled
from rcbfsim._kernels import load_backend


def _time_call(fn, repeats: int) -> float:
    """Best-of-five mean microseconds per call."""
    best = np.inf
    for _ in range(5):
        start = time.perf_counter()
        for _ in range(repeats):
            fn()
        elapsed = (time.perf_counter() - start) / repeats
        best = min(best, elapsed)
    return best * 1e6


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=2000,
                        help="calls per timing sample for the kernel loops")
    parser.add_argument("--seconds", type=float, default=5.0,
                        help="closed-loop horizon for the end-to-end row")
    args = parser.parse_args()

    scenario = load_bundled("four_robot_team")
    spec = build_kernel_spec(scenario)
    z = initial_flat_state(scenario, spec)
    u = np.zeros(2 * spec.n_total)

    backends = {}
    backends["py"] = load_backend("py")
    try:
        backends["cy"] = load_backend("cy")
    except RuntimeError as exc:
        print(f"(compiled backend unavailable: {exc})")

    rows = []
    for name, module in backends.items():
        field_us = _time_call(lambda: module.field(0.0, z, u, spec), args.repeats)
        snap_us = _time_call(lambda: module.control_snapshot(0.0, z, spec), args.repeats)
        start = time.perf_counter()
        run(scenario, mode=MODE_DISTRIBUTED, horizon=args.seconds, backend_name=name)
        run_s = time.perf_counter() - start
        rows.append((name, field_us, snap_us, run_s))

    print(f"{'backend':>8} {'field us':>10} {'snapshot us':>12} {'run(%.0fs) s' % args.seconds:>12}")
    for name, field_us, snap_us, run_s in rows:
        print(f"{name:>8} {field_us:>10.1f} {snap_us:>12.1f} {run_s:>12.3f}")
    if len(rows) == 2:
        py, cy = rows[0], rows[1]
        print(
            f"speedup cy/py: field {py[1] / cy[1]:.2f}x, "
            f"snapshot {py[2] / cy[2]:.2f}x, run {py[3] / cy[3]:.2f}x"
        )


if __name__ == "__main__":
    main()
