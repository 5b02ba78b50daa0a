"""RMSprop and the plateau learning-rate halving schedule."""
import logging
import math
from dataclasses import dataclass, field
from typing import Dict

import numpy as np

from .autograd import Gradients
from .errors import ConfigurationError
from .params import ParamStore

logger = logging.getLogger(__name__)


@dataclass
class RmspropState:
    learning_rate: float = 2e-4
    rho: float = 0.9
    eps: float = 1e-8
    square_avg: Dict[str, np.ndarray] = field(default_factory=dict)
    steps: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigurationError(f"learning_rate must be positive, got {self.learning_rate}")


def rmsprop_step(params: ParamStore, grads: Gradients, state: RmspropState) -> None:
    """One in-place RMSprop update of every trainable parameter.

    v <- rho * v + (1 - rho) * g^2
    p <- p - lr * g / (sqrt(v) + eps)
    """
    for name, tensor in params.items():
        if not tensor.requires_grad:
            continue
        g = grads.get(tensor)
        if g is None:
            g = np.zeros_like(tensor.data)
        v = state.square_avg.get(name)
        if v is None:
            v = state.square_avg[name] = np.zeros_like(tensor.data)
        v *= state.rho
        v += (1.0 - state.rho) * g * g
        tensor.data -= (state.learning_rate * g / (np.sqrt(v) + state.eps)).astype(tensor.dtype, copy=False)
    state.steps += 1


class PlateauHalver:
    """Halve the learning rate after `patience` epochs without improvement."""

    def __init__(self, patience: int, factor: float = 0.5):
        if patience < 1:
            raise ConfigurationError(f"patience must be >= 1, got {patience}")
        self.patience = patience
        self.factor = factor
        self.best = math.inf
        self.num_bad = 0

    def step(self, metric: float, state: RmspropState) -> bool:
        """Feed one epoch's validation metric; return True when the rate was halved."""
        if metric < self.best:
            self.best = metric
            self.num_bad = 0
            return False
        self.num_bad += 1
        if self.num_bad < self.patience:
            return False
        state.learning_rate *= self.factor
        self.num_bad = 0
        logger.info("no improvement for %d epochs, learning rate -> %.3g", self.patience, state.learning_rate)
        return True
