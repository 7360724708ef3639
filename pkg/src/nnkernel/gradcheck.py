"""
Gradient Checker

Compares the reverse-mode gradients of an OperatorGraph with central finite
differences of its scalar output.
"""

from typing import Dict, Mapping, Optional

import numpy as np
import torch

from nnkernel.graph import OperatorGraph, backward, forward
from utils.errors import InvalidInputError
from utils.logging_utils import get_logger

logger = get_logger(__name__)


def relative_error(analytic: float, numeric: float, floor: float = 1e-8) -> float:
    """|analytic - numeric| / max(|analytic|, |numeric|, floor)."""
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def grad_check(graph: OperatorGraph,
               inputs: Mapping[str, torch.Tensor],
               eps: float = 1e-5,
               output: Optional[str] = None,
               max_checks_per_param: Optional[int] = None,
               seed: int = 0) -> float:
    """
    Maximum relative error between analytic and central-difference gradients.

    Args:
        graph: Graph whose parameters are all double precision
        inputs: Graph inputs
        eps: Finite-difference step
        output: Name of the scalar output (the first output by default)
        max_checks_per_param: Check at most this many randomly chosen entries per parameter
        seed: Seed for choosing the checked entries

    Returns:
        Max over checked entries of |analytic - numeric| / max(|analytic|, |numeric|, 1e-8)
    """
    name = output or graph.outputs[0]
    params = [(n, p) for n, p in graph.named_parameters() if p.requires_grad]
    for param_name, param in params:
        if param.dtype != torch.float64:
            raise InvalidInputError(f"grad_check needs double precision; '{param_name}' is {param.dtype}")

    outputs = forward(graph, inputs)
    if outputs[name].numel() != 1:
        raise InvalidInputError(f"grad_check needs a scalar output; '{name}' has shape {tuple(outputs[name].shape)}")
    analytic = backward(graph, name)

    rng = np.random.default_rng(seed)
    worst, worst_param = 0.0, ""
    with torch.no_grad():
        for param_name, param in params:
            flat = param.view(-1)
            grad = analytic[param_name].reshape(-1)
            indices = np.arange(flat.numel())
            if max_checks_per_param is not None and flat.numel() > max_checks_per_param:
                indices = np.sort(rng.choice(flat.numel(), size=max_checks_per_param, replace=False))
            for i in indices:
                original = flat[i].item()
                flat[i] = original + eps
                f_plus = graph(inputs)[name].item()
                flat[i] = original - eps
                f_minus = graph(inputs)[name].item()
                flat[i] = original
                numeric = (f_plus - f_minus) / (2.0 * eps)
                err = relative_error(grad[i].item(), numeric)
                if err > worst:
                    worst, worst_param = err, f"{param_name}[{i}]"

    logger.debug("grad_check max relative error %.3e at %s", worst, worst_param or "-")
    return worst


def grad_check_report(graphs: Mapping[str, OperatorGraph],
                      inputs: Mapping[str, Mapping[str, torch.Tensor]],
                      **kwargs) -> Dict[str, float]:
    """
    Run grad_check on several named graphs.

    Args:
        graphs: Graphs keyed by case name
        inputs: Inputs keyed by the same case names
        kwargs: Forwarded to grad_check

    Returns:
        Max relative error per case
    """
    return {case: grad_check(graph, inputs[case], **kwargs) for case, graph in graphs.items()}
