"""Dense, embedding, recurrent, and convolutional layers.

Layers expose two forward paths: one building the autodiff graph for
training, and a `*_np` twin operating on raw arrays for sampling-time
inference. Both paths share the same elementwise math so their outputs
are bit-identical.
"""
from __future__ import annotations

import numpy as np

from .tensor import (
    Tensor,
    add,
    conv1d,
    matmul,
    mul,
    sigmoid,
    sigmoid_np,
    sub,
    take_rows,
    tanh,
)


def uniform_init(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Module:
    """Base for anything holding named parameters."""

    def parameters(self) -> list[Tensor]:
        return [t for _, t in self.named_parameters()]

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        raise NotImplementedError

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {name: t.data for name, t in self.named_parameters()}

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for name, t in self.named_parameters():
            src = arrays[name]
            if src.shape != t.data.shape:
                raise ValueError(f"shape mismatch for {name}: {src.shape} vs {t.data.shape}")
            t.data = np.array(src, dtype=np.float64, copy=True)


class Linear(Module):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, name: str = "linear"):
        self.name = name
        self.w = Tensor(uniform_init(rng, (n_in, n_out), n_in), requires_grad=True)
        self.b = Tensor(uniform_init(rng, (n_out,), n_in), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return add(matmul(x, self.w), self.b)

    def forward_np(self, x: np.ndarray) -> np.ndarray:
        return x @ self.w.data + self.b.data

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        return [(f"{self.name}.w", self.w), (f"{self.name}.b", self.b)]


class Embedding(Module):
    def __init__(self, n_tokens: int, dim: int, rng: np.random.Generator, name: str = "embedding"):
        self.name = name
        self.table = Tensor(uniform_init(rng, (n_tokens, dim), dim), requires_grad=True)

    def __call__(self, ids: np.ndarray) -> Tensor:
        return take_rows(self.table, ids)

    def forward_np(self, ids: np.ndarray) -> np.ndarray:
        return self.table.data[ids]

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        return [(f"{self.name}.table", self.table)]


class GRUCell(Module):
    """Gated recurrent cell: reset/update gates plus a candidate state."""

    def __init__(self, n_in: int, n_hid: int, rng: np.random.Generator, name: str = "gru"):
        self.name = name
        self.n_hid = n_hid

        def w_in():
            return Tensor(uniform_init(rng, (n_in, n_hid), n_in), requires_grad=True)

        def w_hid():
            return Tensor(uniform_init(rng, (n_hid, n_hid), n_hid), requires_grad=True)

        def bias():
            return Tensor(uniform_init(rng, (n_hid,), n_hid), requires_grad=True)

        self.w_xr, self.w_hr, self.b_r = w_in(), w_hid(), bias()
        self.w_xz, self.w_hz, self.b_z = w_in(), w_hid(), bias()
        self.w_xn, self.w_hn, self.b_n = w_in(), w_hid(), bias()

    def __call__(self, x: Tensor, h: Tensor) -> Tensor:
        r = sigmoid(add(add(matmul(x, self.w_xr), matmul(h, self.w_hr)), self.b_r))
        z = sigmoid(add(add(matmul(x, self.w_xz), matmul(h, self.w_hz)), self.b_z))
        n = tanh(add(add(matmul(x, self.w_xn), mul(r, matmul(h, self.w_hn))), self.b_n))
        return add(mul(sub(Tensor(1.0), z), n), mul(z, h))

    def forward_np(self, x: np.ndarray, h: np.ndarray) -> np.ndarray:
        r = sigmoid_np((x @ self.w_xr.data + h @ self.w_hr.data) + self.b_r.data)
        z = sigmoid_np((x @ self.w_xz.data + h @ self.w_hz.data) + self.b_z.data)
        n = np.tanh((x @ self.w_xn.data + r * (h @ self.w_hn.data)) + self.b_n.data)
        return (1.0 - z) * n + z * h

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        return [
            (f"{self.name}.w_xr", self.w_xr),
            (f"{self.name}.w_hr", self.w_hr),
            (f"{self.name}.b_r", self.b_r),
            (f"{self.name}.w_xz", self.w_xz),
            (f"{self.name}.w_hz", self.w_hz),
            (f"{self.name}.b_z", self.b_z),
            (f"{self.name}.w_xn", self.w_xn),
            (f"{self.name}.w_hn", self.w_hn),
            (f"{self.name}.b_n", self.b_n),
        ]


class Conv1d(Module):
    def __init__(self, c_in: int, c_out: int, width: int, rng: np.random.Generator, name: str = "conv"):
        self.name = name
        fan_in = c_in * width
        self.w = Tensor(uniform_init(rng, (width, c_in, c_out), fan_in), requires_grad=True)
        self.b = Tensor(uniform_init(rng, (c_out,), fan_in), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return conv1d(x, self.w, self.b)

    def forward_np(self, x: np.ndarray) -> np.ndarray:
        k = self.w.data.shape[0]
        l_out = x.shape[1] - k + 1
        out = np.tile(self.b.data, (x.shape[0], l_out, 1))
        for j in range(k):
            out += x[:, j : j + l_out, :] @ self.w.data[j]
        return out

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        return [(f"{self.name}.w", self.w), (f"{self.name}.b", self.b)]
