"""Parameter storage and the Adam update."""

from __future__ import annotations

from typing import Dict, Mapping, Optional

import numpy as np

from ..errors import ShapeError
from .tensor import Tensor


class ParamStore:
    """Named trainable tensors plus non-trainable buffers and Adam moments.

    Owned exclusively by one training loop; inference clones the arrays.
    """

    def __init__(self):
        self.params: Dict[str, Tensor] = {}
        self.buffers: Dict[str, np.ndarray] = {}
        self.m: Dict[str, np.ndarray] = {}
        self.v: Dict[str, np.ndarray] = {}
        self.step_count: int = 0

    def param(self, name: str, init: np.ndarray) -> Tensor:
        if name in self.params:
            raise KeyError(f"duplicate parameter {name!r}")
        t = Tensor(np.asarray(init, dtype=np.float64), requires_grad=True)
        self.params[name] = t
        self.m[name] = np.zeros_like(t.data)
        self.v[name] = np.zeros_like(t.data)
        return t

    def buffer(self, name: str, init: np.ndarray) -> np.ndarray:
        if name in self.buffers:
            raise KeyError(f"duplicate buffer {name!r}")
        arr = np.asarray(init, dtype=np.float64)
        self.buffers[name] = arr
        return arr

    def zero_grad(self) -> None:
        for t in self.params.values():
            t.grad = None

    def grads(self) -> Dict[str, np.ndarray]:
        out = {}
        for name, t in self.params.items():
            out[name] = np.zeros_like(t.data) if t.grad is None else t.grad
        return out

    def n_parameters(self) -> int:
        return sum(t.data.size for t in self.params.values())

    def state_arrays(self) -> Dict[str, np.ndarray]:
        """Flat name->array view of everything a checkpoint needs."""
        out = {f"param/{k}": t.data for k, t in self.params.items()}
        out.update({f"buffer/{k}": v for k, v in self.buffers.items()})
        return out

    def optimizer_arrays(self) -> Dict[str, np.ndarray]:
        out = {f"adam_m/{k}": v for k, v in self.m.items()}
        out.update({f"adam_v/{k}": v for k, v in self.v.items()})
        return out

    def load_state(self, arrays: Mapping[str, np.ndarray],
                   optimizer: Optional[Mapping[str, np.ndarray]] = None,
                   step_count: int = 0) -> None:
        for key, arr in arrays.items():
            kind, _, name = key.partition("/")
            if kind == "param":
                t = self.params[name]
                if t.data.shape != arr.shape:
                    raise ShapeError(f"checkpoint shape {arr.shape} != {t.data.shape} for {name}")
                t.data = arr.astype(np.float64).copy()
            elif kind == "buffer":
                buf = self.buffers[name]
                buf[...] = arr
            else:
                raise KeyError(f"unknown state entry {key!r}")
        if optimizer:
            for key, arr in optimizer.items():
                kind, _, name = key.partition("/")
                table = {"adam_m": self.m, "adam_v": self.v}[kind]
                table[name][...] = arr
        self.step_count = int(step_count)


def adam_step(store: ParamStore, grads: Mapping[str, np.ndarray], lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8,
              weight_decay: float = 0.0) -> None:
    """Bias-corrected Adam; weight decay enters as an L2 gradient term."""
    store.step_count += 1
    t = store.step_count
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for name, p in store.params.items():
        g = grads[name]
        if g.shape != p.data.shape:
            raise ShapeError(f"gradient shape {g.shape} != parameter shape {p.data.shape}")
        if weight_decay != 0.0:
            g = g + weight_decay * p.data
        m = store.m[name]
        v = store.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p.data -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
