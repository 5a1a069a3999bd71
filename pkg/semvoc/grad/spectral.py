"""
Differentiable STFT and iSTFT.

Coefficients travel as one (B, 2K, T) array: real parts in the first K
channels, imaginary parts in the last K. That is the layout a 1x1 conv head
emits and a conv embedding consumes.
"""

import numpy as np

from ..dsp.stft import SpectroFrame, StftPlan, istft, istft_adjoint, stft, stft_adjoint
from ..exceptions import ContractViolation
from .tensor import DiffArray, make_result


def stft_op(x: DiffArray, plan: StftPlan) -> DiffArray:
    """(B, L) waveform -> (B, 2K, T) stacked coefficients."""
    if x.ndim != 2:
        raise ContractViolation('stft', f"expected (B, L) waveform, got {x.shape}")
    length = x.shape[1]
    spec = stft(x.values, plan)
    out = np.concatenate([spec.real, spec.imag], axis=1)
    bins = plan.bins

    def backward(g):
        coef = SpectroFrame(np.ascontiguousarray(g[:, :bins]), np.ascontiguousarray(g[:, bins:]))
        return (stft_adjoint(coef, plan, length),)

    return make_result(out, (x,), backward, 'stft')


def istft_op(coef: DiffArray, plan: StftPlan, length: int) -> DiffArray:
    """(B, 2K, T) stacked coefficients -> (B, length) waveform."""
    bins = plan.bins
    if coef.ndim != 3 or coef.shape[1] != 2 * bins:
        raise ContractViolation('istft', f"expected (B, {2 * bins}, T) coefficients, got {coef.shape}")
    frames = coef.shape[2]
    out = istft(SpectroFrame(coef.values[:, :bins], coef.values[:, bins:]), plan, length)

    def backward(g):
        adj = istft_adjoint(g, plan, frames)
        return (np.concatenate([adj.real, adj.imag], axis=1),)

    return make_result(out, (coef,), backward, 'istft')
