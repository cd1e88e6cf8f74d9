"""Minimal dense tensor math with reverse-mode gradients, sized for the
three model heads in this package (no GPU, no multi-head attention, no
general-purpose autodiff beyond what those models need)."""

from .autograd import Tensor, backward, zero_grad
from .gradcheck import finite_diff_check
from .optim import Adam, clip_global_norm

__all__ = ["Tensor", "backward", "zero_grad", "finite_diff_check", "Adam", "clip_global_norm"]
