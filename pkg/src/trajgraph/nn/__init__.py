from . import autodiff, layers, optim, params
from .autodiff import Tensor

__all__ = ["autodiff", "layers", "optim", "params", "Tensor"]
