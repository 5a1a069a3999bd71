"""
Central finite-difference checks for the op set.

A check reduces the op output to a scalar with a fixed random projection,
back-propagates, and compares every input gradient against
(f(x + h) - f(x - h)) / 2h in float64.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Sequence, Tuple

import numpy as np

from ..dsp.stft import StftPlan
from . import ops
from .spectral import istft_op, stft_op
from .tensor import DiffArray, backward, no_grad

logger = logging.getLogger(__name__)

DEFAULT_STEP = 1e-4
DEFAULT_TOLERANCE = 1e-3

Builder = Callable[[List[DiffArray]], DiffArray]
CaseFactory = Callable[[np.random.Generator], Tuple[Builder, List[np.ndarray]]]

_SPECTRAL_PLAN = StftPlan(hop=2, sample_rate=16)


@dataclass
class GradCheckResult:
    name: str
    max_rel_error: float
    tolerance: float
    shapes: Tuple[Tuple[int, ...], ...] = ()

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance

    def to_dict(self) -> dict:
        return {'name': self.name, 'max_rel_error': self.max_rel_error,
                'tolerance': self.tolerance, 'passed': self.passed,
                'shapes': ' '.join('x'.join(map(str, s)) for s in self.shapes)}


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-8)
    return float(np.linalg.norm(analytic - numeric) / scale)


def numeric_gradient(f: Callable[[], float], x: np.ndarray, h: float = DEFAULT_STEP) -> np.ndarray:
    """Central differences of ``f`` w.r.t. the (writeable) array ``x``, perturbed in place."""
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = f()
        flat[i] = orig - h
        down = f()
        flat[i] = orig
        out[i] = (up - down) / (2 * h)
    return grad


def check_function(
    name: str,
    build: Builder,
    inputs: Sequence[np.ndarray],
    seed: int = 0,
    h: float = DEFAULT_STEP,
    tolerance: float = DEFAULT_TOLERANCE,
) -> GradCheckResult:
    """Compare analytic and numeric gradients of ``build`` at ``inputs``."""
    arrays = [np.array(x, dtype=np.float64) for x in inputs]
    leaves = [DiffArray(a, requires_grad=True) for a in arrays]
    out = build(leaves)
    projection = np.random.default_rng(seed).standard_normal(out.shape)
    loss = ops.sum_(ops.mul(out, DiffArray(projection)))
    backward(loss)

    def scalar() -> float:
        with no_grad():
            return float(np.sum(build([DiffArray(a) for a in arrays]).values * projection))

    worst = 0.0
    for leaf, array in zip(leaves, arrays):
        analytic = leaf.grad if leaf.grad is not None else np.zeros_like(array)
        worst = max(worst, relative_error(analytic, numeric_gradient(scalar, array, h)))
    logger.debug("gradcheck %s: max rel error %.3e", name, worst)
    return GradCheckResult(name, worst, tolerance, shapes=tuple(a.shape for a in arrays))


def check_module(
    name: str,
    loss_fn: Callable[[], DiffArray],
    params: Dict[str, DiffArray],
    h: float = DEFAULT_STEP,
    tolerance: float = 1e-2,
    max_entries: int = 24,
    seed: int = 0,
) -> GradCheckResult:
    """
    Check a scalar loss against numeric gradients on a seeded sample of
    parameter entries (parameters must be float64).
    """
    for p in params.values():
        p.zero_grad()
    grads = backward(loss_fn(), params)
    rng = np.random.default_rng(seed)

    analytic: List[float] = []
    numeric: List[float] = []
    for pname, p in params.items():
        values = np.array(p.values)
        p.values = values
        flat = values.reshape(-1)
        picks = rng.choice(flat.size, size=min(max_entries, flat.size), replace=False)
        for i in sorted(picks):
            orig = flat[i]
            with no_grad():
                flat[i] = orig + h
                up = float(loss_fn().values)
                flat[i] = orig - h
                down = float(loss_fn().values)
            flat[i] = orig
            analytic.append(float(grads[pname].reshape(-1)[i]))
            numeric.append((up - down) / (2 * h))
    err = relative_error(np.array(analytic), np.array(numeric))
    logger.debug("gradcheck %s: rel error %.3e over %d entries", name, err, len(analytic))
    return GradCheckResult(name, err, tolerance)


def _dims(rng: np.random.Generator, count: int, low: int = 2, high: int = 5) -> List[int]:
    return [int(d) for d in rng.integers(low, high + 1, size=count)]


def _normal(rng: np.random.Generator, *shape: int) -> np.ndarray:
    return rng.standard_normal(shape)


def _positive(rng: np.random.Generator, *shape: int) -> np.ndarray:
    return rng.uniform(0.5, 2.0, shape)


def _away_from_zero(rng: np.random.Generator, *shape: int) -> np.ndarray:
    x = rng.standard_normal(shape)
    return np.where(np.abs(x) < 0.1, 0.1 * np.sign(x) + x, x)


def _binary(op: Callable, second: Callable = _normal) -> CaseFactory:
    def case(rng):
        rows, cols = _dims(rng, 2)
        return (lambda a: op(a[0], a[1])), [_normal(rng, rows, cols), second(rng, rows, cols)]
    return case


def _unary(op: Callable) -> CaseFactory:
    def case(rng):
        return (lambda a: op(a[0])), [_normal(rng, *_dims(rng, 2))]
    return case


def _scalar_broadcast(rng):
    return (lambda a: ops.mul(a[0], a[1])), [_normal(rng, *_dims(rng, 2)), _normal(rng, 1)]


def _matmul(rng):
    b, m, k, n = _dims(rng, 4)
    return (lambda a: ops.matmul(a[0], a[1])), [_normal(rng, b, m, k), _normal(rng, k, n)]


def _matmul_batched(rng):
    b, m, k, n = _dims(rng, 4)
    return (lambda a: ops.matmul(a[0], a[1])), [_normal(rng, b, m, k), _normal(rng, b, k, n)]


def _conv1d(rng):
    b, c_in, c_out, k, extra = _dims(rng, 5)
    return ((lambda a: ops.conv1d(a[0], a[1], a[2])),
            [_normal(rng, b, c_in, k + extra), _normal(rng, c_out, c_in, k), _normal(rng, c_out)])


def _conv1d_grouped(rng):
    b, per_in, per_out, k, extra = _dims(rng, 5)
    return ((lambda a: ops.conv1d(a[0], a[1], groups=2)),
            [_normal(rng, b, 2 * per_in, k + extra), _normal(rng, 2 * per_out, per_in, k)])


def _conv1d_depthwise(rng):
    b, channels, k, extra = _dims(rng, 4)
    return ((lambda a: ops.conv1d(a[0], a[1], groups=channels)),
            [_normal(rng, b, channels, k + extra), _normal(rng, channels, 1, k)])


def _conv1d_pointwise(rng):
    b, c_in, c_out, length = _dims(rng, 4)
    return ((lambda a: ops.conv1d(a[0], a[1], a[2])),
            [_normal(rng, b, c_in, length), _normal(rng, c_out, c_in, 1), _normal(rng, c_out)])


def _reshape(rng):
    rows, cols = _dims(rng, 2)
    return (lambda a: ops.reshape(a[0], (cols, rows))), [_normal(rng, rows, cols)]


def _broadcast_to(rng):
    rows, cols = _dims(rng, 2)
    return (lambda a: ops.broadcast_to(a[0], (rows, cols))), [_normal(rng, rows, 1)]


def _concat(rng):
    rows, left, right = _dims(rng, 3)
    return (lambda a: ops.concat([a[0], a[1]], axis=1)), [_normal(rng, rows, left), _normal(rng, rows, right)]


def _slice(rng):
    return (lambda a: ops.slice_(a[0], (slice(1, None), slice(None, None, 2)))), [_normal(rng, *_dims(rng, 2))]


def _take_rows(rng):
    vocab, width, rows, cols = _dims(rng, 4)
    ids = rng.integers(0, vocab, size=(rows, cols))
    return (lambda a: ops.take_rows(a[0], ids)), [_normal(rng, vocab, width)]


def _gather_rows(rng):
    b, n, width, picks = _dims(rng, 4)
    index = rng.integers(0, n, size=(b, picks))
    return (lambda a: ops.gather_rows(a[0], index)), [_normal(rng, b, n, width)]


def _prelu(rng):
    b, channels, length = _dims(rng, 3)
    return (lambda a: ops.prelu(a[0], a[1], axis=1)), [_away_from_zero(rng, b, channels, length), _normal(rng, channels)]


def _stft(rng):
    b, extra = _dims(rng, 2)
    length = _SPECTRAL_PLAN.fft_size + _SPECTRAL_PLAN.hop * extra
    return (lambda a: stft_op(a[0], _SPECTRAL_PLAN)), [_normal(rng, b, length)]


def _istft(rng):
    b, frames = _dims(rng, 2)
    frames += 2
    length = frames * _SPECTRAL_PLAN.hop
    return (lambda a: istft_op(a[0], _SPECTRAL_PLAN, length)), [_normal(rng, b, 2 * _SPECTRAL_PLAN.bins, frames)]


# name -> case factory; every seed draws its own shapes (2 to 5 per axis) and index arrays
OP_CASES: Dict[str, CaseFactory] = {
    'add': _binary(ops.add),
    'sub': _binary(ops.sub),
    'mul': _binary(ops.mul),
    'div': _binary(ops.div, _positive),
    'scalar_broadcast': _scalar_broadcast,
    'matmul': _matmul,
    'matmul_batched': _matmul_batched,
    'conv1d': _conv1d,
    'conv1d_grouped': _conv1d_grouped,
    'conv1d_depthwise': _conv1d_depthwise,
    'conv1d_pointwise': _conv1d_pointwise,
    'transpose': _unary(lambda x: ops.transpose(x, (1, 0))),
    'reshape': _reshape,
    'broadcast_to': _broadcast_to,
    'concat': _concat,
    'slice': _slice,
    'take_rows': _take_rows,
    'gather_rows': _gather_rows,
    'mean': _unary(lambda x: ops.mean(x, axis=1, keepdims=True)),
    'mean_all': _unary(ops.mean),
    'sum': _unary(lambda x: ops.sum_(x, axis=0)),
    'prelu': _prelu,
    'gelu': _unary(ops.gelu),
    'softmax': _unary(lambda x: ops.softmax(x, axis=-1)),
    'log_softmax': _unary(lambda x: ops.log_softmax(x, axis=-1)),
    'rms': _unary(lambda x: ops.rms(x, axis=1)),
    'layer_norm': _unary(lambda x: ops.layer_norm(x, axis=-1)),
    'exp': _unary(ops.exp),
    'stft': _stft,
    'istft': _istft,
}


def draw_case(name: str, seed: int) -> Tuple[Builder, List[np.ndarray]]:
    """Builder and seeded inputs for one registered op case."""
    return OP_CASES[name](np.random.default_rng(seed))


def run_op_suite(seeds: Sequence[int] = (0, 1, 2), tolerance: float = DEFAULT_TOLERANCE) -> List[GradCheckResult]:
    """Run every registered op case for each seed."""
    results = []
    for name in OP_CASES:
        for seed in seeds:
            build, inputs = draw_case(name, seed)
            results.append(check_function(f"{name}[seed={seed}]", build, inputs, seed=seed, tolerance=tolerance))
    return results
