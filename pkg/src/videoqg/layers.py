"""Parameter containers and the small set of layers shared by all models."""
from __future__ import annotations

from typing import Iterator

import numpy as np

from . import tensor as T
from .tensor import Parameter, Tensor


class Module:
    """Holds parameters and child modules; attribute names become parameter paths."""

    def __init__(self) -> None:
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_children", {})

    def __setattr__(self, name, value):
        if isinstance(value, Parameter):
            self._params[name] = value
        elif isinstance(value, Module):
            self._children[name] = value
        object.__setattr__(self, name, value)

    def named_parameters(self, prefix: str = "") -> list[tuple[str, Parameter]]:
        """All parameters with dotted path names, sorted by name."""
        out = []
        for name, p in self._params.items():
            full = prefix + name
            p.name = full
            out.append((full, p))
        for name, child in self._children.items():
            out.extend(child.named_parameters(prefix + name + "."))
        if not prefix:
            out.sort(key=lambda kv: kv[0])
            names = [n for n, _ in out]
            if len(set(names)) != len(names):
                raise ValueError("duplicate parameter names")
        return out

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = dict(self.named_parameters())
        missing = set(params) - set(state)
        extra = set(state) - set(params)
        if missing or extra:
            raise KeyError(f"state mismatch: missing={sorted(missing)} unexpected={sorted(extra)}")
        for name, p in params.items():
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != p.shape:
                raise ValueError(f"{name}: shape {arr.shape} != {p.shape}")
            p.data = arr.copy()
            p.zero_grad()

    def num_parameters(self) -> int:
        return int(sum(p.data.size for p in self.parameters()))


class ModuleList(Module):
    def __init__(self, modules) -> None:
        super().__init__()
        self._items = []
        for i, m in enumerate(modules):
            setattr(self, str(i), m)
            self._items.append(m)

    def __iter__(self) -> Iterator[Module]:
        return iter(self._items)

    def __len__(self) -> int:
        return len(self._items)

    def __getitem__(self, i):
        return self._items[i]


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int, shape=None) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape or (fan_in, fan_out))


class Linear(Module):
    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator, bias: bool = True) -> None:
        super().__init__()
        self.W = Parameter(glorot(rng, d_in, d_out))
        self.b = Parameter(np.zeros(d_out)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        y = T.matmul(x, self.W)
        return y + self.b if self.b is not None else y


class LayerNorm(Module):
    def __init__(self, d: int, eps: float = 1e-5) -> None:
        super().__init__()
        self.gain = Parameter(np.ones(d))
        self.bias = Parameter(np.zeros(d))
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        return T.layer_norm(x, self.gain, self.bias, self.eps)


class FeedForward(Module):
    """Two-layer position-wise MLP with a ReLU between."""

    def __init__(self, d_model: int, d_hidden: int, rng: np.random.Generator) -> None:
        super().__init__()
        self.fc1 = Linear(d_model, d_hidden, rng)
        self.fc2 = Linear(d_hidden, d_model, rng)

    def __call__(self, x: Tensor) -> Tensor:
        return self.fc2(T.relu(self.fc1(x)))


class LSTMCell(Module):
    """Gate order in the fused weight matrices: input, forget, candidate, output."""

    def __init__(self, d_in: int, d_hidden: int, rng: np.random.Generator) -> None:
        super().__init__()
        self.d_hidden = d_hidden
        self.Wx = Parameter(glorot(rng, d_in, 4 * d_hidden))
        self.Wh = Parameter(glorot(rng, d_hidden, 4 * d_hidden))
        b = np.zeros(4 * d_hidden)
        b[d_hidden:2 * d_hidden] = 1.0
        self.b = Parameter(b)

    def __call__(self, x: Tensor, h: Tensor, c: Tensor) -> tuple[Tensor, Tensor]:
        n = self.d_hidden
        z = T.matmul(x, self.Wx) + T.matmul(h, self.Wh) + self.b
        i = T.sigmoid(z[..., :n])
        f = T.sigmoid(z[..., n:2 * n])
        g = T.tanh(z[..., 2 * n:3 * n])
        o = T.sigmoid(z[..., 3 * n:])
        c_new = f * c + i * g
        return o * T.tanh(c_new), c_new


class LSTMStack(Module):
    """Stacked LSTM cells advanced one time step per call."""

    def __init__(self, d_in: int, d_hidden: int, n_layers: int, rng: np.random.Generator) -> None:
        super().__init__()
        self.d_hidden = d_hidden
        self.cells = ModuleList(
            [LSTMCell(d_in if i == 0 else d_hidden, d_hidden, rng) for i in range(n_layers)]
        )

    def zero_state(self, batch: int) -> list[tuple[Tensor, Tensor]]:
        z = np.zeros((batch, self.d_hidden))
        return [(Tensor(z), Tensor(z)) for _ in self.cells]

    def step(self, x: Tensor, state):
        new_state = []
        for cell, (h, c) in zip(self.cells, state):
            h, c = cell(x, h, c)
            new_state.append((h, c))
            x = h
        return x, new_state

    def run(self, xs: Tensor, mask: np.ndarray):
        """Run over a padded ``(B, L, d)`` sequence.

        Padded steps (``mask`` False) carry the previous state through, so
        the returned final state is the state after each row's last real step.
        Returns ``(outputs (B, L, d_hidden), final_state)``.
        """
        batch, length = mask.shape
        state = self.zero_state(batch)
        outputs = []
        for t in range(length):
            out, new_state = self.step(xs[:, t], state)
            keep = mask[:, t]
            if keep.all():
                state = new_state
            else:
                m = np.repeat(keep[:, None].astype(np.float64), self.d_hidden, axis=1)
                state = [
                    (hn * m + ho * (1.0 - m), cn * m + co * (1.0 - m))
                    for (hn, cn), (ho, co) in zip(new_state, state)
                ]
            outputs.append(state[-1][0])
        return T.stack(outputs, axis=1), state
