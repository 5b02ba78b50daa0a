"""
Named parameter storage and initialization.

Parameter names are hierarchical and dot-separated (``enc1.conv.weight``); the
layer a parameter belongs to is its name without the final component.
Running statistics of batch norm live next to the parameters as buffers: they
are saved in checkpoints but are not learnable and are not counted.
"""
from collections import OrderedDict
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np
import pandas as pd

from .autograd import Tensor
from .errors import ShapeError, UsageError
from .layers import GruParams

PARAM_DTYPE = np.float32
PRELU_INIT = 0.25


class ParamStore:
    """Ordered mapping of parameter name to :class:`Tensor`, plus buffers."""

    def __init__(self, rng: Optional[np.random.Generator] = None, dtype=PARAM_DTYPE):
        self._params: "OrderedDict[str, Tensor]" = OrderedDict()
        self._buffers: "OrderedDict[str, np.ndarray]" = OrderedDict()
        self._rng = rng
        self.dtype = np.dtype(dtype)

    # -- access -----------------------------------------------------------

    def __getitem__(self, name: str) -> Tensor:
        try:
            return self._params[name]
        except KeyError:
            raise UsageError(f"unknown parameter {name!r}")

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    def items(self):
        return self._params.items()

    def tensors(self) -> List[Tensor]:
        return list(self._params.values())

    def buffer(self, name: str) -> np.ndarray:
        try:
            return self._buffers[name]
        except KeyError:
            raise UsageError(f"unknown buffer {name!r}")

    def buffers(self):
        return self._buffers.items()

    def gru(self, prefix: str) -> GruParams:
        return GruParams(*(self[f"{prefix}.{part}"] for part in ("w_ih", "w_hh", "b_ih", "b_hh")))

    # -- registration -----------------------------------------------------

    def add(self, name: str, value) -> Tensor:
        if name in self._params or name in self._buffers:
            raise UsageError(f"parameter {name!r} registered twice")
        tensor = Tensor(np.array(value, dtype=self.dtype), requires_grad=True, name=name)
        self._params[name] = tensor
        return tensor

    def add_buffer(self, name: str, value) -> np.ndarray:
        if name in self._params or name in self._buffers:
            raise UsageError(f"buffer {name!r} registered twice")
        self._buffers[name] = np.array(value, dtype=self.dtype)
        return self._buffers[name]

    def _uniform(self, shape, bound):
        if self._rng is None:
            raise UsageError("this parameter store has no random generator", hint="pass rng= to initialize layers")
        return self._rng.uniform(-bound, bound, size=shape)

    def conv(self, name, c_out, c_in, kernel):
        kf, kt = kernel
        bound = 1.0 / np.sqrt(c_in * kf * kt)
        self.add(f"{name}.weight", self._uniform((c_out, c_in, kf, kt), bound))
        self.add(f"{name}.bias", self._uniform((c_out,), bound))

    def deconv(self, name, c_in, c_out, kernel):
        kf, kt = kernel
        bound = 1.0 / np.sqrt(c_out * kf * kt)
        self.add(f"{name}.weight", self._uniform((c_in, c_out, kf, kt), bound))
        self.add(f"{name}.bias", self._uniform((c_out,), bound))

    def linear(self, name, n_out, n_in):
        bound = 1.0 / np.sqrt(n_in)
        self.add(f"{name}.weight", self._uniform((n_out, n_in), bound))
        self.add(f"{name}.bias", self._uniform((n_out,), bound))

    def gru_layer(self, name, n_in, hidden):
        bound = 1.0 / np.sqrt(hidden)
        self.add(f"{name}.w_ih", self._uniform((3 * hidden, n_in), bound))
        self.add(f"{name}.w_hh", self._uniform((3 * hidden, hidden), bound))
        self.add(f"{name}.b_ih", self._uniform((3 * hidden,), bound))
        self.add(f"{name}.b_hh", self._uniform((3 * hidden,), bound))

    def batch_norm(self, name, channels):
        self.add(f"{name}.scale", np.ones(channels))
        self.add(f"{name}.shift", np.zeros(channels))
        self.add_buffer(f"{name}.running_mean", np.zeros(channels))
        self.add_buffer(f"{name}.running_var", np.ones(channels))

    def layer_norm(self, name, features):
        self.add(f"{name}.scale", np.ones(features))
        self.add(f"{name}.shift", np.zeros(features))

    def prelu(self, name, channels):
        self.add(f"{name}.slope", np.full(channels, PRELU_INIT))

    # -- bookkeeping ------------------------------------------------------

    def count(self, prefix: str = "") -> int:
        """Number of learnable scalars, optionally restricted to a name prefix."""
        return sum(t.data.size for n, t in self._params.items() if n.startswith(prefix))

    def layer_table(self) -> pd.DataFrame:
        """One row per layer: name, parameter shapes and scalar count."""
        rows: "OrderedDict[str, Dict]" = OrderedDict()
        for name, tensor in self._params.items():
            layer, _, leaf = name.rpartition(".")
            row = rows.setdefault(layer, {"layer": layer, "shapes": [], "params": 0})
            row["shapes"].append(f"{leaf}{list(tensor.shape)}")
            row["params"] += tensor.data.size
        table = pd.DataFrame(list(rows.values()), columns=["layer", "shapes", "params"])
        table["shapes"] = table["shapes"].map(" ".join)
        return table

    def freeze(self) -> None:
        for tensor in self._params.values():
            tensor.requires_grad = False

    def state(self) -> Tuple[Dict[str, np.ndarray], Dict[str, np.ndarray]]:
        return (OrderedDict((n, t.data) for n, t in self._params.items()),
                OrderedDict(self._buffers))

    def load_state(self, params: Dict[str, np.ndarray], buffers: Dict[str, np.ndarray]) -> None:
        """Overwrite values in place; names and shapes must match exactly."""
        _match("parameter", self._params.keys(), params.keys())
        _match("buffer", self._buffers.keys(), buffers.keys())
        for name, value in params.items():
            tensor = self._params[name]
            if tuple(value.shape) != tensor.shape:
                raise ShapeError(f"{name}: expected shape {tensor.shape}, got {tuple(value.shape)}")
            tensor.data = np.array(value, dtype=self.dtype)
        for name, value in buffers.items():
            if tuple(value.shape) != self._buffers[name].shape:
                raise ShapeError(f"{name}: expected shape {self._buffers[name].shape}, got {tuple(value.shape)}")
            self._buffers[name] = np.array(value, dtype=self.dtype)

    def astype(self, dtype) -> "ParamStore":
        """Deep copy with every parameter and buffer cast to ``dtype``."""
        clone = ParamStore(self._rng, dtype)
        for name, tensor in self._params.items():
            clone.add(name, tensor.data)
            clone[name].requires_grad = tensor.requires_grad
        for name, value in self._buffers.items():
            clone.add_buffer(name, value)
        return clone

    def copy(self) -> "ParamStore":
        return self.astype(self.dtype)


def _match(kind, expected, got):
    expected, got = list(expected), list(got)
    missing = [n for n in expected if n not in set(got)]
    extra = [n for n in got if n not in set(expected)]
    if missing or extra:
        raise ShapeError(f"{kind} names differ: missing {missing[:5]}, unexpected {extra[:5]}")
