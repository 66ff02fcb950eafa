"""Timing comparison between the compiled and pure NumPy kernels."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import kernels


@dataclass
class BenchRow:
    op: str
    shape: str
    backend: str
    seconds: float


# (name, input shape, runner factory); shapes mirror the desk-scale model
_CASES = (
    ("im2col 3x3", (4, 64, 16, 16), lambda m, x: m.im2col(x, 3, 3, 1, 1)),
    ("im2col 7x7/2", (4, 3, 64, 64), lambda m, x: m.im2col(x, 7, 7, 2, 3)),
    (
        "col2im 3x3",
        (4, 64, 16, 16),
        lambda m, x: m.col2im(m.im2col(x, 3, 3, 1, 1), 16, 16, 3, 3, 1, 1),
    ),
    ("maxpool fwd", (4, 64, 32, 32), lambda m, x: m.maxpool2x2_forward(x)),
    ("upsample fwd", (4, 64, 16, 16), lambda m, x: m.upsample2x_forward(x)),
)


def run_benchmark(repeats=5, seed=0):
    """Best-of-N wall time per op per available backend."""
    rng = np.random.default_rng(seed)
    rows = []
    modules = kernels.backend_modules()
    for name, shape, fn in _CASES:
        x = rng.normal(size=shape).astype(np.float32)
        for backend, module in modules.items():
            best = float("inf")
            fn(module, x)  # warm up
            for _ in range(repeats):
                t0 = time.perf_counter()
                fn(module, x)
                best = min(best, time.perf_counter() - t0)
            rows.append(BenchRow(op=name, shape=str(shape), backend=backend, seconds=best))
    return rows


def format_table(rows):
    lines = [f"active backend: {kernels.BACKEND}", ""]
    lines.append(f"{'op':<14} {'input':<18} {'backend':<8} {'best (us)':>10} {'speedup':>8}")
    by_key = {}
    for r in rows:
        by_key.setdefault((r.op, r.shape), {})[r.backend] = r.seconds
    for r in rows:
        pure = by_key[(r.op, r.shape)].get("pure")
        speedup = f"{pure / r.seconds:.2f}x" if pure and r.backend != "pure" else ""
        lines.append(
            f"{r.op:<14} {r.shape:<18} {r.backend:<8} {r.seconds * 1e6:>10.1f} {speedup:>8}"
        )
    return "\n".join(lines) + "\n"


def to_csv(rows):
    lines = ["op,input_shape,backend,best_seconds"]
    for r in rows:
        lines.append(f'{r.op},"{r.shape}",{r.backend},{r.seconds:.6g}')
    return "\n".join(lines) + "\n"
