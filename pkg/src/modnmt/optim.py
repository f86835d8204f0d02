"""Adam optimizer over named parameters with freeze support."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import GradientError, Tensor


@dataclass
class Parameter:
    """A named trainable tensor. Frozen parameters are never updated."""

    name: str
    tensor: Tensor
    frozen: bool = False

    @property
    def data(self) -> np.ndarray:
        return self.tensor.data


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.98
    epsilon: float = 1e-9
    step_count: int = 0
    first_moment: dict = field(default_factory=dict)
    second_moment: dict = field(default_factory=dict)


class Adam:
    """Adam with bias correction, keyed by parameter name.

    Frozen parameters are skipped entirely: no update, no moment change, so
    their bytes are identical before and after a step.
    """

    def __init__(self, beta1: float = 0.9, beta2: float = 0.98, epsilon: float = 1e-9):
        self.state = AdamState(beta1=beta1, beta2=beta2, epsilon=epsilon)

    def step(self, params: list[Parameter], lr: float) -> None:
        st = self.state
        st.step_count += 1
        t = st.step_count
        bc1 = 1.0 - st.beta1**t
        bc2 = 1.0 - st.beta2**t
        for p in params:
            if p.frozen or not p.tensor.requires_grad:
                continue
            g = p.tensor.grad
            if g is None:
                continue
            if not np.all(np.isfinite(g)):
                raise GradientError(f"non-finite gradient for parameter {p.name!r}")
            m = st.first_moment.get(p.name)
            if m is None:
                m = st.first_moment[p.name] = np.zeros_like(p.tensor.data)
            v = st.second_moment.get(p.name)
            if v is None:
                v = st.second_moment[p.name] = np.zeros_like(p.tensor.data)
            m *= st.beta1
            m += (1.0 - st.beta1) * g
            v *= st.beta2
            v += (1.0 - st.beta2) * g * g
            mhat = m / bc1
            vhat = v / bc2
            p.tensor.data -= lr * mhat / (np.sqrt(vhat) + st.epsilon)


def adam_step(params: list[Parameter], optimizer: Adam, lr: float) -> None:
    """Apply one Adam update. Gradients must already be accumulated."""
    optimizer.step(params, lr)
