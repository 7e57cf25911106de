"""Benchmark: compiled extension vs NumPy fallback on the two hot kernels.

Usage:  python benchmarks/bench_kernels.py
"""
import math
import time

import numpy as np

from surveval import mlp
from surveval._kernels import _fallback
from surveval.game import GameParams

try:
    from surveval._kernels import _core
except ImportError:
    _core = None


def _time(fn, repeat=3):
    best = math.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_trace(impl, p, n_branches=60):
    def run():
        for i in range(n_branches):
            beta = 2.35 + (i + 0.5) * (math.pi - 0.05 - 2.35) / n_branches
            x_t = p.rho * math.sin(beta)
            y_t = p.rho * math.cos(beta)
            c = p.rho / (p.v_p * p.rho + p.v_e * y_t)
            impl.trace_characteristic(
                x_t, y_t, c * x_t / p.rho, c * y_t / p.rho, -1.0, 1e-3, 4000,
                p.v_e, p.v_p, p.omega_e, p.rho,
            )

    return run


def bench_flows(impl, p, model, n_rows=4000, steps_delta=0.2):
    rng = np.random.default_rng(0)
    x = rng.uniform(-0.6, 0.6, n_rows)
    y = rng.uniform(-0.6, 0.6, n_rows)
    ue = rng.uniform(-1, 1, n_rows)
    up = rng.uniform(-math.pi, math.pi, n_rows)
    head = model.value_head_params()

    def run():
        impl.flow_values(x, y, ue, up, steps_delta, 1e-3, head,
                         p.v_e, p.v_p, p.omega_e, p.rho)

    return run


def bench_flows_small(impl, p, model, calls=300):
    # the refinement stage of the gain/loss optimizers issues many tiny batches
    rng = np.random.default_rng(0)
    x = rng.uniform(-0.4, 0.4, 6)
    y = rng.uniform(-0.4, 0.4, 6)
    ue = rng.uniform(-1, 1, 6)
    up = rng.uniform(-math.pi, math.pi, 6)
    head = model.value_head_params()

    def run():
        for _ in range(calls):
            impl.flow_values(x, y, ue, up, 0.2, 1e-3, head,
                             p.v_e, p.v_p, p.omega_e, p.rho)

    return run


def main():
    p = GameParams()
    model = mlp.init_model(np.random.default_rng(1))
    rows = []
    for name, fn in (
        ("trace_characteristic (60 branches x <=4000 steps)", bench_trace),
        ("flow_values (4000 rows x 200 steps)", bench_flows),
        ("flow_values (300 calls of 6 rows x 200 steps)", bench_flows_small),
    ):
        maker = fn
        args = (p,) if fn is bench_trace else (p, model)
        t_fb = _time(maker(_fallback, *args))
        if _core is not None:
            t_c = _time(maker(_core, *args))
            rows.append((name, t_fb, t_c, t_fb / t_c))
        else:
            rows.append((name, t_fb, None, None))

    print(f"{'kernel':<50} {'fallback':>10} {'compiled':>10} {'speedup':>9}")
    for name, t_fb, t_c, sp in rows:
        if t_c is None:
            print(f"{name:<50} {t_fb:>9.3f}s {'n/a':>10} {'n/a':>9}")
        else:
            print(f"{name:<50} {t_fb:>9.3f}s {t_c:>9.3f}s {sp:>8.1f}x")
    if _core is None:
        print("\ncompiled extension not built; run: python setup.py build_ext --inplace")


if __name__ == "__main__":
    main()
