"""
Adam Optimizer Module

Thin stateful wrapper around torch.optim.Adam that takes explicit named
gradients, supports one learning rate per parameter group and refuses
non-finite gradients.
"""

from typing import Dict, Mapping, Optional, Sequence, Tuple

import torch
import torch.nn as nn

from utils.errors import InvalidInputError, TrainingError

BETAS = (0.9, 0.999)
EPSILON = 1e-8


class AdamState:
    """First/second moment state and hyperparameters of Adam."""

    def __init__(self,
                 param_groups: Sequence[Tuple[Mapping[str, nn.Parameter], float]],
                 betas: Tuple[float, float] = BETAS,
                 eps: float = EPSILON):
        """
        Initialize the optimizer state.

        Args:
            param_groups: (named parameters, learning rate) pairs
            betas: Moment decay rates
            eps: Denominator epsilon
        """
        self.names: Dict[int, str] = {}
        groups = []
        for params, lr in param_groups:
            if lr <= 0:
                raise InvalidInputError(f"Learning rate must be positive, got {lr}")
            for name, param in params.items():
                self.names[id(param)] = name
            if params:
                groups.append({"params": list(params.values()), "lr": lr})
        self.optimizer = torch.optim.Adam(groups, betas=betas, eps=eps, foreach=False) if groups else None
        self.step = 0

    @classmethod
    def single(cls, params: Mapping[str, nn.Parameter], lr: float, **kwargs) -> "AdamState":
        """State for one parameter group."""
        return cls([(params, lr)], **kwargs)

    def moments(self, param: nn.Parameter) -> Tuple[Optional[torch.Tensor], Optional[torch.Tensor]]:
        """Return (first moment, second moment) of a parameter, or (None, None) before its first update."""
        if self.optimizer is None:
            return None, None
        state = self.optimizer.state.get(param, {})
        return state.get("exp_avg"), state.get("exp_avg_sq")

    def state_tensors(self) -> Dict[str, torch.Tensor]:
        """Moment tensors keyed by '<param>.exp_avg' / '<param>.exp_avg_sq'."""
        tensors: Dict[str, torch.Tensor] = {}
        if self.optimizer is None:
            return tensors
        for param, state in self.optimizer.state.items():
            name = self.names[id(param)]
            for key in ("exp_avg", "exp_avg_sq"):
                if key in state:
                    tensors[f"{name}.{key}"] = state[key]
        return tensors


def adam_step(params: Mapping[str, nn.Parameter],
              grads: Mapping[str, torch.Tensor],
              state: AdamState) -> Tuple[Mapping[str, nn.Parameter], AdamState]:
    """
    Apply one bias-corrected Adam update in place.

    Args:
        params: Parameters keyed by name (must belong to the state's groups)
        grads: Gradients keyed by the same names
        state: Optimizer state

    Returns:
        Tuple of (params, state), both updated
    """
    for name, param in params.items():
        if name not in grads:
            continue
        grad = grads[name]
        if tuple(grad.shape) != tuple(param.shape):
            raise InvalidInputError(f"Gradient for '{name}' has shape {tuple(grad.shape)}, parameter {tuple(param.shape)}")
        if not torch.isfinite(grad).all():
            raise TrainingError(f"Non-finite gradient for parameter '{name}'")

    if state.optimizer is None:
        return params, state

    for name, param in params.items():
        param.grad = grads[name].detach().clone().to(param.dtype) if name in grads else None
    state.optimizer.step()
    state.optimizer.zero_grad(set_to_none=True)
    state.step += 1
    return params, state


def named_trainable(module: nn.Module, prefix: str = "") -> Dict[str, nn.Parameter]:
    """Trainable parameters of a module keyed by (prefixed) name."""
    return {f"{prefix}{name}": p for name, p in module.named_parameters() if p.requires_grad}
