"""
SGD with momentum and coupled weight decay:

    v <- momentum * v + grad + weight_decay * param
    param <- param - lr * v
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from autograd import Tensor
from errors import ShapeError

logger = logging.getLogger(__name__)


@dataclass
class OptimizerState:
    lr: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 5e-4
    buffers: List[Optional[np.ndarray]] = field(default_factory=list)


def sgd_step(params: Sequence[np.ndarray], grads: Sequence[Optional[np.ndarray]], state: OptimizerState) -> None:
    """Update params in place; a missing grad counts as zero."""
    if len(params) != len(grads):
        raise ShapeError(f"{len(params)} parameters but {len(grads)} gradients")
    if len(state.buffers) != len(params):
        state.buffers = [np.zeros_like(p) for p in params]
    for i, (param, grad) in enumerate(zip(params, grads)):
        if grad is None:
            grad = np.zeros_like(param)
        if grad.shape != param.shape or state.buffers[i].shape != param.shape:
            raise ShapeError(f"parameter {i}: shape {param.shape}, grad {grad.shape}, buffer {state.buffers[i].shape}")
        buf = state.buffers[i]
        buf *= state.momentum
        buf += grad + state.weight_decay * param
        param -= state.lr * buf


class SGD:
    def __init__(self, named_params: List[Tuple[str, Tensor]], momentum: float = 0.9, weight_decay: float = 5e-4):
        self.names = [name for name, _ in named_params]
        self.params = [p for _, p in named_params]
        self.state = OptimizerState(
            momentum=momentum,
            weight_decay=weight_decay,
            buffers=[np.zeros_like(p.data) for p in self.params],
        )

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self, lr: float) -> None:
        self.state.lr = lr
        sgd_step([p.data for p in self.params], [p.grad for p in self.params], self.state)

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: buf.copy() for name, buf in zip(self.names, self.state.buffers)}

    def load_state_dict(self, buffers: Dict[str, np.ndarray]) -> None:
        for i, name in enumerate(self.names):
            if name in buffers:
                value = np.asarray(buffers[name], dtype=np.float64)
                if value.shape != self.params[i].shape:
                    raise ShapeError(f"momentum buffer '{name}' has shape {value.shape}, expected {self.params[i].shape}")
                self.state.buffers[i] = value.copy()
