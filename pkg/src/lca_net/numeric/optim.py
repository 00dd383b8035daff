"""Adam with bias correction."""

from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional

import numpy as np

from ..errors import ContractError
from .tensor import Tensor


@dataclass
class AdamState:
    """Step counter and per-parameter moment estimates."""

    step: int = 0
    first_moment: Dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: Dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(
    params: Mapping[str, Tensor],
    state: AdamState,
    lr: float,
    weight_decay_grad: Optional[Mapping[str, np.ndarray]] = None,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> AdamState:
    """Apply one update to every parameter in ``params`` and clear its gradient.

    ``weight_decay_grad`` holds extra gradient terms (e.g. 2λθ) added before the
    moment updates, for losses whose penalty is not on the tape.
    """
    missing = [name for name, param in params.items() if param.grad is None]
    if missing:
        raise ContractError(f"parameter {missing[0]!r} has no gradient")

    state.step += 1
    correction1 = 1.0 - beta1 ** state.step
    correction2 = 1.0 - beta2 ** state.step

    for name, param in params.items():
        grad = param.grad
        if weight_decay_grad is not None and name in weight_decay_grad:
            grad = grad + weight_decay_grad[name]

        m = state.first_moment.get(name)
        v = state.second_moment.get(name)
        if m is None:
            m = np.zeros_like(param.data)
            v = np.zeros_like(param.data)
        m = beta1 * m + (1.0 - beta1) * grad
        v = beta2 * v + (1.0 - beta2) * (grad * grad)
        state.first_moment[name] = m
        state.second_moment[name] = v

        param.data = param.data - lr * (m / correction1) / (np.sqrt(v / correction2) + eps)
        param.grad = None
    return state


class Adam:
    """Holds the Adam constants and state for one training run."""

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.state = AdamState()

    def step(
        self,
        params: Mapping[str, Tensor],
        weight_decay_grad: Optional[Mapping[str, np.ndarray]] = None,
    ) -> None:
        adam_step(
            params,
            self.state,
            self.lr,
            weight_decay_grad=weight_decay_grad,
            beta1=self.beta1,
            beta2=self.beta2,
            eps=self.eps,
        )
