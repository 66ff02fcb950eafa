"""Central finite-difference verification of analytic gradients.

The checker is the oracle for every backward implementation: it compares
the gradients produced by the tape against (f(x+h) - f(x-h)) / 2h, one
scalar probe per element, in double precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .tensor import Graph, Tensor, backward


@dataclass
class InputReport:
    """Per-input element-wise comparison of analytic vs numeric gradients."""

    name: str
    max_rel_error: float
    worst_index: tuple
    checked: int
    failures: int
    nonfinite: int

    @property
    def passed(self):
        return self.failures == 0 and self.nonfinite == 0


@dataclass
class CheckReport:
    tolerance: float
    step: float
    inputs: list[InputReport] = field(default_factory=list)

    @property
    def passed(self):
        return all(r.passed for r in self.inputs)

    @property
    def max_rel_error(self):
        return max((r.max_rel_error for r in self.inputs), default=0.0)

    def summary(self):
        lines = []
        for r in self.inputs:
            status = "ok" if r.passed else "FAIL"
            lines.append(
                f"{r.name:<28s} {status:>4s}  max_rel_err={r.max_rel_error:.3e}"
                f"  checked={r.checked}  failures={r.failures}  nonfinite={r.nonfinite}"
            )
        return "\n".join(lines)


def _rel_error(a, n):
    # Unit floor keeps masked/zero gradients from dividing noise by noise;
    # for O(1) gradients this is the plain relative error.
    return abs(a - n) / max(1.0, abs(a), abs(n))


def finite_difference_check(fn, inputs, step=1e-5, tolerance=1e-4, names=None):
    """Check analytic gradients of ``fn`` against central differences.

    fn: callable taking the given Tensors and returning a scalar Tensor
        (sum outputs first if the op is not already scalar-valued).
    inputs: Tensors to probe; each is checked elementwise. Inputs should
        be float64 for the stated tolerances to be reachable.
    Returns a CheckReport; non-finite probe results are counted as
    failures rather than raised.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    names = names or [f"input[{i}]" for i in range(len(inputs))]

    for t in inputs:
        t.requires_grad = True
        t.grad = None
    with Graph() as g:
        loss = fn(*inputs)
    if loss.shape != ():
        raise ValueError("fn must produce a scalar (sum outputs before checking)")
    backward(loss, g)

    report = CheckReport(tolerance=tolerance, step=step)
    for t, name in zip(inputs, names):
        analytic = np.zeros(t.shape, dtype=np.float64) if t.grad is None else np.asarray(t.grad, dtype=np.float64)
        max_err, worst = 0.0, ()
        failures = nonfinite = 0
        flat = t.data.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            f_plus = float(fn(*inputs).data)
            flat[i] = orig - step
            f_minus = float(fn(*inputs).data)
            flat[i] = orig
            if not (math.isfinite(f_plus) and math.isfinite(f_minus)):
                nonfinite += 1
                continue
            numeric = (f_plus - f_minus) / (2 * step)
            idx = np.unravel_index(i, t.shape) if t.shape else ()
            err = _rel_error(float(analytic.reshape(-1)[i]), numeric)
            if err > max_err:
                max_err, worst = err, idx
            if err > tolerance:
                failures += 1
        report.inputs.append(
            InputReport(
                name=name,
                max_rel_error=max_err,
                worst_index=worst,
                checked=flat.size,
                failures=failures,
                nonfinite=nonfinite,
            )
        )
    return report


def standard_checks(step=1e-5, tolerance=1e-4, seed=0, include_model=True):
    """The full battery: every primitive plus a miniature stacked model.

    Returns [(name, CheckReport), ...] in a fixed order. All checks run
    in double precision; relu inputs are kept away from the kink and
    the maxpool input has well-separated values so the subgradient
    choice cannot flip inside the probe interval.
    """
    from .model import ModelConfig, init_params, named_parameters, stacked_forward
    from .tensor import (
        BatchNormState,
        add,
        batchnorm,
        conv2d,
        maxpool2x2,
        mse_loss,
        relu,
        sum_all,
        upsample_nearest2x,
    )

    rng = np.random.default_rng(seed)

    def t(*shape):
        return Tensor(rng.normal(size=shape), requires_grad=True)

    checks = []

    x, w, b = t(2, 3, 6, 6), t(4, 3, 3, 3), t(4)
    checks.append(
        (
            "conv2d (3x3, pad 1)",
            finite_difference_check(
                lambda x, w, b: sum_all(conv2d(x, w, b, stride=1, padding=1)),
                [x, w, b],
                step=step,
                tolerance=tolerance,
                names=["x", "weight", "bias"],
            ),
        )
    )
    x, w, b = t(1, 2, 8, 8), t(3, 2, 3, 3), t(3)
    checks.append(
        (
            "conv2d (3x3, stride 2)",
            finite_difference_check(
                lambda x, w, b: sum_all(conv2d(x, w, b, stride=2, padding=1)),
                [x, w, b],
                step=step,
                tolerance=tolerance,
                names=["x", "weight", "bias"],
            ),
        )
    )
    spread = Tensor(
        rng.permutation(2 * 2 * 8 * 8).reshape(2, 2, 8, 8) * 0.37, requires_grad=True
    )
    checks.append(
        (
            "maxpool2x2",
            finite_difference_check(
                lambda x: sum_all(maxpool2x2(x)), [spread], step=step, tolerance=tolerance
            ),
        )
    )
    checks.append(
        (
            "upsample_nearest2x",
            finite_difference_check(
                lambda x: sum_all(upsample_nearest2x(x)), [t(2, 3, 4, 4)], step=step, tolerance=tolerance
            ),
        )
    )
    xb, gm, bt = t(3, 4, 5, 5), t(4), t(4)
    target = Tensor(rng.normal(size=(3, 4, 5, 5)))
    bn_state = BatchNormState(4, dtype=np.float64)
    checks.append(
        (
            "batchnorm (train)",
            finite_difference_check(
                lambda x, g, b: mse_loss(batchnorm(x, g, b, bn_state, "train"), target),
                [xb, gm, bt],
                step=step,
                tolerance=tolerance,
                names=["x", "gamma", "beta"],
            ),
        )
    )
    checks.append(
        (
            "batchnorm (eval)",
            finite_difference_check(
                lambda x, g, b: mse_loss(batchnorm(x, g, b, bn_state, "eval"), target),
                [xb, gm, bt],
                step=step,
                tolerance=tolerance,
                names=["x", "gamma", "beta"],
            ),
        )
    )
    away = rng.normal(size=(5, 5))
    away += np.where(away >= 0, 0.5, -0.5)  # keep |x| > 2h from the kink
    checks.append(
        (
            "relu",
            finite_difference_check(
                lambda x: sum_all(relu(x)),
                [Tensor(away, requires_grad=True)],
                step=step,
                tolerance=tolerance,
            ),
        )
    )
    checks.append(
        (
            "add",
            finite_difference_check(
                lambda a, b: sum_all(add(a, b)), [t(3, 5), t(3, 5)], step=step, tolerance=tolerance
            ),
        )
    )
    mse_target = Tensor(rng.normal(size=(4, 6)))
    checks.append(
        (
            "mse_loss",
            finite_difference_check(
                lambda p: mse_loss(p, mse_target), [t(4, 6)], step=step, tolerance=tolerance
            ),
        )
    )
    checks.append(
        (
            "sum_all",
            finite_difference_check(lambda x: sum_all(x), [t(3, 4)], step=step, tolerance=tolerance),
        )
    )

    if include_model:
        cfg = ModelConfig(
            num_joints=2, num_stacks=1, num_features=8, hourglass_depth=2, input_resolution=16
        )
        params = init_params(cfg, seed=seed, dtype=np.float64)
        image = Tensor(rng.normal(size=(2, 3, 16, 16)))
        model_target = Tensor(rng.normal(size=(2, 2, 4, 4)))
        tensors = [t for _, t in named_parameters(params)]
        names = [n for n, _ in named_parameters(params)]

        def model_loss(*_tensors):
            outs = stacked_forward(image, params, "train")
            return mse_loss(outs[0], model_target)

        checks.append(
            (
                "miniature model (all parameters)",
                finite_difference_check(
                    model_loss, tensors, step=step, tolerance=tolerance, names=names
                ),
            )
        )
    return checks
