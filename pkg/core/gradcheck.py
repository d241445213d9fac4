"""
Gradient Checks

Compares tape gradients against central finite differences in float64, and
runs the full suite over every differentiable operation.
"""

import logging
import time
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from core.ang import ang_loss
from core.ffm import ffm_fuse, init_ffm_params
from core.maae import init_maae_params, maae_forward, mixed_block, recon_loss, sa
from core.tensor import (
    Tape,
    Tensor,
    backward,
    concat_channels,
    conv2d,
    elementwise,
    l2_norm,
    leaky_relu,
    matmul,
    mse,
    precision,
    reshape,
    resize_bilinear,
    softmax_rows,
    tensor_sum,
    transpose2d,
)
from models.features import FeatureStack
from models.params import BlockParams, SaParams
from models.report import GradCheckReport

logger = logging.getLogger(__name__)

LossFn = Callable[..., Tensor]
Case = Tuple[LossFn, List[np.ndarray]]

DEFAULT_EPS = 1e-5
DEFAULT_TOL = 1e-4
COMPOSITE_TOL = 1e-3


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-3)


def grad_check(
    f: LossFn,
    inputs: Sequence[np.ndarray],
    eps: float = DEFAULT_EPS,
    tol: float = DEFAULT_TOL,
    name: str = "",
    max_coords: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> GradCheckReport:
    """
    Check d f / d inputs against central differences.

    Args:
        f: maps one Tensor per input to a scalar Tensor
        inputs: input arrays (converted to float64)
        max_coords: check only this many random coordinates per input

    Returns:
        GradCheckReport with the worst relative error seen
    """
    with precision("float64"):
        arrays = [np.array(a, dtype=np.float64) for a in inputs]
        leaves = [Tensor(a, requires_grad=True) for a in arrays]
        with Tape() as tape:
            loss = f(*leaves)
        backward(loss, tape)
        analytic = [leaf.grad if leaf.grad is not None else np.zeros_like(leaf.data) for leaf in leaves]

        report = GradCheckReport(name=name, max_error=0.0, tolerance=tol)
        for which, arr in enumerate(arrays):
            coords = list(np.ndindex(arr.shape))
            if max_coords is not None and len(coords) > max_coords:
                picker = rng or np.random.default_rng(0)
                coords = [coords[i] for i in picker.choice(len(coords), size=max_coords, replace=False)]
            for coord in coords:
                original = arr[coord]
                arr[coord] = original + eps
                plus = f(*[Tensor(a) for a in arrays]).item()
                arr[coord] = original - eps
                minus = f(*[Tensor(a) for a in arrays]).item()
                arr[coord] = original
                error = relative_error(float(analytic[which][coord]), (plus - minus) / (2 * eps))
                if error > report.max_error:
                    report.max_error = error
                    report.worst_index = tuple(int(i) for i in coord)
                    report.worst_input = which
    return report


def _project(out: Tensor, weights: np.ndarray) -> Tensor:
    """Reduce any output to a scalar through a fixed random projection."""
    return tensor_sum(elementwise("hadamard", out, Tensor(weights)))


def _matmul_case(rng):
    r = rng.normal(size=(3, 5))
    return (lambda a, b: _project(matmul(a, b), r)), [rng.normal(size=(3, 4)), rng.normal(size=(4, 5))]


def _transpose_case(rng):
    r = rng.normal(size=(5, 3))
    return (lambda x: _project(transpose2d(x), r)), [rng.normal(size=(3, 5))]


def _reshape_case(rng):
    r = rng.normal(size=(2, 3, 4))
    return (lambda x: _project(reshape(x, (2, 3, 4)), r)), [rng.normal(size=(6, 4))]


def _softmax_case(rng):
    r = rng.normal(size=(4, 6))
    return (lambda x: _project(softmax_rows(x), r)), [rng.normal(size=(4, 6))]


def _conv_stride_case(rng):
    r = rng.normal(size=(3, 4, 4))
    f = lambda x, k, b: _project(conv2d(x, k, b, stride=2, dilation=1, padding=1), r)  # noqa: E731
    return f, [rng.normal(size=(2, 8, 8)), rng.normal(size=(3, 2, 3, 3)), rng.normal(size=(3,))]


def _conv_dilated_case(rng):
    r = rng.normal(size=(2, 10, 10))
    f = lambda x, k, b: _project(conv2d(x, k, b, stride=1, dilation=4, padding=4), r)  # noqa: E731
    return f, [rng.normal(size=(2, 10, 10)), rng.normal(size=(2, 2, 3, 3)), rng.normal(size=(2,))]


def _concat_case(rng):
    r = rng.normal(size=(5, 3, 3))
    return (lambda a, b: _project(concat_channels(a, b), r)), [rng.normal(size=(2, 3, 3)), rng.normal(size=(3, 3, 3))]


def _elementwise_case(kind: str):
    def build(rng):
        r = rng.normal(size=(3, 4))
        if kind == "scale":
            factor = float(rng.normal())
            return (lambda a: _project(elementwise("scale", a, factor), r)), [rng.normal(size=(3, 4))]
        return (lambda a, b: _project(elementwise(kind, a, b), r)), [rng.normal(size=(3, 4)), rng.normal(size=(3, 4))]
    return build


def _mse_case(rng):
    return (lambda y, t: mse(y, t, 4)), [rng.normal(size=(4, 3)), rng.normal(size=(4, 3))]


def _l2_case(rng):
    return (lambda w: l2_norm(w)), [rng.normal(size=(4, 3))]


def _leaky_case(rng):
    r = rng.normal(size=(3, 5))
    x = rng.uniform(0.1, 1.0, size=(3, 5)) * rng.choice([-1.0, 1.0], size=(3, 5))
    return (lambda a: _project(leaky_relu(a, 0.1), r)), [x]


def _resize_case(align_corners: bool):
    def build(rng):
        r = rng.normal(size=(2, 7, 5))
        f = lambda x: _project(resize_bilinear(x, (7, 5), align_corners), r)  # noqa: E731
        return f, [rng.normal(size=(2, 4, 3))]
    return build


def _sa_params(rng, width: int) -> List[np.ndarray]:
    bound = 1.0 / np.sqrt(width)
    return [rng.uniform(-bound, bound, size=(width, width)) for _ in range(4)]


def _sa_case(rng):
    r = rng.normal(size=(5, 4))

    def f(x, q, k, v, o):
        return _project(sa(x, SaParams(q, k, v, o)), r)

    return f, [rng.normal(size=(5, 4))] + _sa_params(rng, 4)


def _mixed_block_case(rng):
    grid, channels = (4, 4), 6
    r = rng.normal(size=(16, channels))
    bound = 1.0 / np.sqrt(channels * 9)

    def f(x, *p):
        block = BlockParams(SaParams(*p[0:4]), SaParams(*p[4:8]), p[8], p[9])
        return _project(mixed_block(x, block, grid, dilation=2), r)

    params = _sa_params(rng, channels) + _sa_params(rng, 16) + [
        rng.uniform(-bound, bound, size=(channels, channels, 3, 3)),
        rng.uniform(-bound, bound, size=(channels,)),
    ]
    return f, [rng.normal(size=(16, channels))] + params


def _tiny_stack(rng) -> List[np.ndarray]:
    """Four stages with channels (1, 1, 2, 4) ending on a 2×2 grid: C = 8, N = 4."""
    return [rng.normal(size=shape) for shape in ((1, 16, 16), (1, 8, 8), (2, 4, 4), (4, 2, 2))]


def _ffm_case(rng):
    template = init_ffm_params((1, 1, 2, 4), dilation=1, rng=rng, dtype=np.float64, scheme="uniform")
    names = list(template.named())
    r = rng.normal(size=(4, 8))

    def f(*tensors):
        stack = FeatureStack(stages=list(tensors[:4]))
        params = template.with_tensors(dict(zip(names, tensors[4:])))
        return _project(ffm_fuse(stack, params).tokens, r)

    return f, _tiny_stack(rng) + [template.named()[n].data for n in names]


def _ang_loss_case(rng):
    lambda_ang, lambda_re = float(rng.uniform(0.1, 1.0)), float(rng.uniform(0.1, 1.0))
    return (lambda le, w: ang_loss(le, w, lambda_ang, lambda_re)), [np.array(rng.uniform(0.5, 2.0)), rng.normal(size=(4, 3))]


def _composite_case(rng):
    """recon_loss(maae_forward(ffm_fuse(stack))) on 2 blocks, C = 8, N = 4."""
    ffm_template = init_ffm_params((1, 1, 2, 4), dilation=1, rng=rng, dtype=np.float64, scheme="uniform")
    model_template = init_maae_params(4, 8, (2, 2), num_blocks=2, residual_period=1, dilation=1,
                                      mixed=True, rng=rng, dtype=np.float64, scheme="uniform")
    ffm_names = list(ffm_template.named())
    model_names = list(model_template.named())
    target = rng.normal(size=(4, 8))

    def f(*tensors):
        stack = FeatureStack(stages=list(tensors[:4]))
        ffm = ffm_template.with_tensors(dict(zip(ffm_names, tensors[4:4 + len(ffm_names)])))
        model = model_template.with_tensors(dict(zip(model_names, tensors[4 + len(ffm_names):])))
        y = maae_forward(ffm_fuse(stack, ffm).tokens, model)
        return recon_loss(y, Tensor(target), 4)

    arrays = (_tiny_stack(rng)
              + [ffm_template.named()[n].data for n in ffm_names]
              + [model_template.named()[n].data for n in model_names])
    return f, arrays


# name -> (case builder, tolerance, coordinates sampled per input or None for all)
GRADCHECK_CASES: Dict[str, Tuple[Callable[[np.random.Generator], Case], float, Optional[int]]] = {
    "matmul": (_matmul_case, DEFAULT_TOL, None),
    "transpose2d": (_transpose_case, DEFAULT_TOL, None),
    "reshape": (_reshape_case, DEFAULT_TOL, None),
    "softmax_rows": (_softmax_case, DEFAULT_TOL, None),
    "conv2d/stride2": (_conv_stride_case, DEFAULT_TOL, None),
    "conv2d/dilation4": (_conv_dilated_case, DEFAULT_TOL, None),
    "concat_channels": (_concat_case, DEFAULT_TOL, None),
    "add": (_elementwise_case("add"), DEFAULT_TOL, None),
    "sub": (_elementwise_case("sub"), DEFAULT_TOL, None),
    "hadamard": (_elementwise_case("hadamard"), DEFAULT_TOL, None),
    "scale": (_elementwise_case("scale"), DEFAULT_TOL, None),
    "mse": (_mse_case, DEFAULT_TOL, None),
    "l2_norm": (_l2_case, DEFAULT_TOL, None),
    "leaky_relu": (_leaky_case, DEFAULT_TOL, None),
    "resize_bilinear/aligned": (_resize_case(True), DEFAULT_TOL, None),
    "resize_bilinear/half_pixel": (_resize_case(False), DEFAULT_TOL, None),
    "sa": (_sa_case, DEFAULT_TOL, None),
    "mixed_block": (_mixed_block_case, DEFAULT_TOL, 24),
    "ffm_fuse": (_ffm_case, DEFAULT_TOL, 24),
    "ang_loss": (_ang_loss_case, DEFAULT_TOL, None),
    "maae_forward(ffm_fuse)": (_composite_case, COMPOSITE_TOL, 16),
}


def run_gradcheck_suite(
    instances: int = 20,
    seed: int = 0,
    names: Optional[Sequence[str]] = None,
) -> List[GradCheckReport]:
    """
    Run every registered case on ``instances`` random draws.

    Returns:
        One report per operation carrying the worst error over all instances
    """
    selected = list(names) if names else list(GRADCHECK_CASES)
    reports: List[GradCheckReport] = []
    started = time.perf_counter()
    for op_index, name in enumerate(selected):
        build, tol, max_coords = GRADCHECK_CASES[name]
        worst = GradCheckReport(name=name, max_error=0.0, instances=instances, tolerance=tol)
        for instance in range(instances):
            rng = np.random.default_rng([seed, op_index, instance])
            with precision("float64"):
                f, inputs = build(rng)
            report = grad_check(f, inputs, DEFAULT_EPS, tol, name, max_coords, rng)
            if report.max_error >= worst.max_error:
                worst.max_error = report.max_error
                worst.worst_index = report.worst_index
                worst.worst_input = report.worst_input
        logger.info(f"gradcheck {name}: max relative error {worst.max_error:.3e} "
                    f"({'ok' if worst.passed else 'FAIL'})")
        reports.append(worst)
    logger.info("gradcheck suite finished in %.1fs", time.perf_counter() - started)
    return reports
