"""
Parameter containers and the basic layers the encoder and heads are built from.

A Module discovers its parameters by walking its attributes in definition
order: Tensors with requires_grad are parameters, Modules (and lists of
Modules) are recursed into, and numpy arrays registered through
register_buffer are non-trainable state such as batch-norm running stats.
"""

import logging
from typing import Dict, Iterator, List, Tuple

import numpy as np

from autograd import Tensor, batch_norm, conv2d, layer_norm, linear
from errors import ShapeError

logger = logging.getLogger(__name__)


def he_uniform(rng: np.random.Generator, fan_in: int, shape: Tuple[int, ...], scale: float = 1.0) -> np.ndarray:
    bound = scale * np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Module:
    """Base class with parameter discovery, train/eval mode and state dicts."""

    def __init__(self):
        self.training = True
        self._buffers: Dict[str, np.ndarray] = {}

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def register_buffer(self, name: str, value: np.ndarray) -> None:
        self._buffers[name] = np.asarray(value, dtype=np.float64)

    def buffer(self, name: str) -> np.ndarray:
        return self._buffers[name]

    def _children(self) -> Iterator[Tuple[str, object]]:
        for name, value in vars(self).items():
            if name.startswith("_") or name == "training":
                continue
            yield name, value

    def named_parameters(self, prefix: str = "") -> List[Tuple[str, Tensor]]:
        found = []
        for name, value in self._children():
            key = f"{prefix}{name}"
            if isinstance(value, Tensor) and value.requires_grad:
                found.append((key, value))
            elif isinstance(value, Module):
                found.extend(value.named_parameters(key + "."))
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        found.extend(item.named_parameters(f"{key}.{i}."))
        return found

    def named_buffers(self, prefix: str = "") -> List[Tuple[str, np.ndarray]]:
        found = [(f"{prefix}{name}", value) for name, value in self._buffers.items()]
        for name, value in self._children():
            key = f"{prefix}{name}"
            if isinstance(value, Module):
                found.extend(value.named_buffers(key + "."))
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        found.extend(item.named_buffers(f"{key}.{i}."))
        return found

    def parameters(self) -> List[Tensor]:
        return [p for _, p in self.named_parameters()]

    def modules(self) -> Iterator["Module"]:
        yield self
        for _, value in self._children():
            if isinstance(value, Module):
                yield from value.modules()
            elif isinstance(value, (list, tuple)):
                for item in value:
                    if isinstance(item, Module):
                        yield from item.modules()

    def train(self, mode: bool = True) -> "Module":
        for module in self.modules():
            module.training = mode
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def state_dict(self) -> Dict[str, np.ndarray]:
        state = {name: p.data.copy() for name, p in self.named_parameters()}
        state.update({name: b.copy() for name, b in self.named_buffers()})
        return state

    def load_state_dict(self, state: Dict[str, np.ndarray], strict: bool = True) -> List[str]:
        """Copy arrays in place; returns the names that were loaded."""
        targets = {name: p.data for name, p in self.named_parameters()}
        targets.update(dict(self.named_buffers()))
        loaded = []
        for name, target in targets.items():
            if name not in state:
                if strict:
                    raise KeyError(f"missing state entry '{name}'")
                continue
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != target.shape:
                raise ShapeError(f"state entry '{name}' has shape {value.shape}, expected {target.shape}")
            target[...] = value
            loaded.append(name)
        return loaded


def parameter(data: np.ndarray, name: str = "") -> Tensor:
    return Tensor(data, requires_grad=True, name=name)


class Linear(Module):
    """y = x W + b over the last axis; W is (in, out)."""

    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator, bias: bool = True, scale: float = 1.0):
        super().__init__()
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.weight = parameter(he_uniform(rng, in_dim, (in_dim, out_dim), scale), "weight")
        self.bias = parameter(np.zeros(out_dim), "bias") if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return linear(x, self.weight, self.bias)


class Conv2d(Module):
    def __init__(self, in_ch: int, out_ch: int, kernel: int, rng: np.random.Generator, stride: int = 1, pad: int = 0):
        super().__init__()
        self.stride = stride
        self.pad = pad
        fan_in = in_ch * kernel * kernel
        self.weight = parameter(he_uniform(rng, fan_in, (out_ch, in_ch, kernel, kernel)), "weight")
        self.bias = parameter(np.zeros(out_ch), "bias")

    def forward(self, x: Tensor) -> Tensor:
        return conv2d(x, self.weight, self.bias, stride=self.stride, pad=self.pad)


class BatchNorm2d(Module):
    def __init__(self, channels: int, momentum: float = 0.9, eps: float = 1e-5):
        super().__init__()
        self.momentum = momentum
        self.eps = eps
        self.gamma = parameter(np.ones(channels), "gamma")
        self.beta = parameter(np.zeros(channels), "beta")
        self.register_buffer("running_mean", np.zeros(channels))
        self.register_buffer("running_var", np.ones(channels))

    def forward(self, x: Tensor) -> Tensor:
        return batch_norm(
            x,
            self.gamma,
            self.beta,
            self.buffer("running_mean"),
            self.buffer("running_var"),
            training=self.training,
            momentum=self.momentum,
            eps=self.eps,
        )


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5):
        super().__init__()
        self.eps = eps
        self.gamma = parameter(np.ones(dim), "gamma")
        self.beta = parameter(np.zeros(dim), "beta")

    def forward(self, x: Tensor) -> Tensor:
        return layer_norm(x, self.gamma, self.beta, self.eps)
