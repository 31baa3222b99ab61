"""Parameters, layer building blocks, and the GRU cell."""

from __future__ import annotations

import numpy as np

from . import ops
from .tensor import ShapeError, Tensor


class Parameter(Tensor):
    """A trainable tensor carrying its own Adam moments."""

    __slots__ = ("m", "v", "step")

    def __init__(self, data, name: str | None = None):
        super().__init__(data, requires_grad=True, name=name)
        self.m = np.zeros_like(self.data)
        self.v = np.zeros_like(self.data)
        self.step = 0


def glorot(rng: np.random.Generator, shape: tuple, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class Module:
    """Minimal parameter container; subclasses register Parameters as attributes."""

    def parameters(self) -> list:
        return [p for _, p in self.named_parameters()]

    def named_parameters(self, prefix: str = "") -> list:
        out = []
        for key, value in vars(self).items():
            name = f"{prefix}{key}"
            if isinstance(value, Parameter):
                out.append((name, value))
            elif isinstance(value, Module):
                out.extend(value.named_parameters(name + "."))
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        out.extend(item.named_parameters(f"{name}.{i}."))
                    elif isinstance(item, Parameter):
                        out.append((f"{name}.{i}", item))
        return out

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None


class Linear(Module):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator):
        self.weight = Parameter(glorot(rng, (n_in, n_out), n_in, n_out))
        self.bias = Parameter(np.zeros(n_out))

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.weight.shape[0]:
            raise ShapeError("linear", x.shape, self.weight.shape)
        return ops.add(ops.matmul(x, self.weight), self.bias)


class MLP(Module):
    """Linear layers with LeakyReLU between them (and after the last if ``activate_last``)."""

    def __init__(self, sizes, rng: np.random.Generator, slope: float = 0.01,
                 activate_last: bool = False):
        self.layers = [Linear(a, b, rng) for a, b in zip(sizes[:-1], sizes[1:])]
        self.slope = slope
        self.activate_last = activate_last

    def __call__(self, x: Tensor) -> Tensor:
        last = len(self.layers) - 1
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < last or self.activate_last:
                x = ops.leaky_relu(x, self.slope)
        return x


class Conv2d(Module):
    def __init__(self, c_in: int, c_out: int, kernel: int, rng: np.random.Generator,
                 stride: int = 1, padding: int = 0):
        fan_in, fan_out = c_in * kernel * kernel, c_out * kernel * kernel
        self.weight = Parameter(glorot(rng, (c_out, c_in, kernel, kernel), fan_in, fan_out))
        self.bias = Parameter(np.zeros(c_out))
        self.stride = stride
        self.padding = padding

    def __call__(self, x: Tensor) -> Tensor:
        return ops.conv2d(x, self.weight, self.bias, self.stride, self.padding)


class GRUCell(Module):
    """Standard GRU update with separate input and hidden projections.

    r = sigmoid(x Wir + bir + h Whr + bhr)
    z = sigmoid(x Wiz + biz + h Whz + bhz)
    n = tanh(x Win + bin + r * (h Whn + bhn))
    h' = (1 - z) * n + z * h
    """

    def __init__(self, n_in: int, n_hidden: int, rng: np.random.Generator):
        self.w_input = Parameter(glorot(rng, (n_in, 3 * n_hidden), n_in, n_hidden))
        self.w_hidden = Parameter(glorot(rng, (n_hidden, 3 * n_hidden), n_hidden, n_hidden))
        self.b_input = Parameter(np.zeros(3 * n_hidden))
        self.b_hidden = Parameter(np.zeros(3 * n_hidden))
        self.n_hidden = n_hidden

    def __call__(self, x: Tensor, h: Tensor) -> Tensor:
        return gru_cell(x, h, self.w_input, self.w_hidden, self.b_input, self.b_hidden)


def gru_cell(x, h, w_input, w_hidden, b_input, b_hidden) -> Tensor:
    """One GRU step; weight columns are laid out as [reset | update | candidate]."""
    n = h.shape[-1]
    if (x.shape[-1] != w_input.shape[0] or h.shape[-1] != w_hidden.shape[0]
            or w_input.shape[1] != 3 * n or w_hidden.shape[1] != 3 * n):
        raise ShapeError("gru_cell", x.shape, h.shape, w_input.shape, w_hidden.shape)
    gi = ops.add(ops.matmul(x, w_input), b_input)
    gh = ops.add(ops.matmul(h, w_hidden), b_hidden)
    r = ops.sigmoid(ops.add(gi[..., :n], gh[..., :n]))
    z = ops.sigmoid(ops.add(gi[..., n:2 * n], gh[..., n:2 * n]))
    cand = ops.tanh(ops.add(gi[..., 2 * n:], ops.mul(r, gh[..., 2 * n:])))
    return ops.add(ops.mul(ops.sub(1.0, z), cand), ops.mul(z, h))
