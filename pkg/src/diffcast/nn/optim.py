"""Adam with bias correction, operating on named parameter groups in place."""

from __future__ import annotations

import numpy as np

from ..errors import ShapeError, TrainingError


class Adam:
    def __init__(self, params: dict[str, np.ndarray], *, learning_rate: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, epsilon: float = 1e-8):
        self.params = params
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.step_count = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, grads: dict[str, np.ndarray]) -> None:
        self.step_count += 1
        bc1 = 1.0 - self.beta1 ** self.step_count
        bc2 = 1.0 - self.beta2 ** self.step_count
        for name, p in self.params.items():
            g = grads[name]
            if g.shape != p.shape:
                raise ShapeError(f"gradient for '{name}' has shape {g.shape}, parameter has {p.shape}")
            if not np.all(np.isfinite(g)):
                raise TrainingError(f"non-finite gradient in parameter group '{name}'")
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= self.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + self.epsilon)

    def state_arrays(self) -> dict[str, np.ndarray]:
        """Moment buffers plus the step counter, for checkpointing."""
        out = {}
        for name in self.params:
            out[f"optim.m.{name}"] = self.m[name]
            out[f"optim.v.{name}"] = self.v[name]
        out["optim.step_count"] = np.array(float(self.step_count))
        return out

    def load_state_arrays(self, values: dict[str, np.ndarray]) -> None:
        for name in self.params:
            np.copyto(self.m[name], values[f"optim.m.{name}"])
            np.copyto(self.v[name], values[f"optim.v.{name}"])
        self.step_count = int(values["optim.step_count"])
