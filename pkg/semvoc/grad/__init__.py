"""Reverse-mode differentiable arrays, layers, AdamW and the FVCK checkpoint format."""

from .checkpoint import Checkpoint, decode_text, encode_text, read_entries, write_entries
from .optim import OptState, adamw_step, clip_grad_norm, scheduled_lr
from .tensor import DiffArray, backward, is_grad_enabled, no_grad

__all__ = [
    'Checkpoint', 'DiffArray', 'OptState', 'adamw_step', 'backward', 'clip_grad_norm',
    'decode_text', 'encode_text', 'is_grad_enabled', 'no_grad', 'read_entries',
    'scheduled_lr', 'write_entries',
]
