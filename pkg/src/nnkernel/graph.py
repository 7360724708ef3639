"""
Operator Graph Module

This module provides OperatorGraph, an ordered list of operator nodes with named
inputs and outputs, together with the forward and backward passes over it.
Reverse-mode gradients come from torch autograd.
"""

from dataclasses import dataclass
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import torch
import torch.nn as nn

from utils.errors import InvalidInputError, StateError
from utils.logging_utils import get_logger

logger = get_logger(__name__)

Shape = Tuple[Optional[int], ...]


@dataclass(frozen=True)
class GraphNode:
    """One operator application: op(*inputs) -> output."""

    name: str
    op: nn.Module
    inputs: Tuple[str, ...]
    output: str


class OperatorGraph(nn.Module):
    """Acyclic graph of operators evaluated in declaration order."""

    def __init__(self, nodes: Sequence[GraphNode], input_shapes: Mapping[str, Shape], outputs: Sequence[str]):
        """
        Initialize the graph.

        Args:
            nodes: Operator nodes; every node input must be a graph input or an earlier node output
            input_shapes: Declared shape per graph input (None marks a free dimension)
            outputs: Names of the values returned by forward
        """
        super().__init__()
        self.nodes: List[GraphNode] = list(nodes)
        self.input_shapes: Dict[str, Shape] = {k: tuple(v) for k, v in input_shapes.items()}
        self.outputs: Tuple[str, ...] = tuple(outputs)
        self.ops = nn.ModuleDict({node.name: node.op for node in self.nodes})
        self._recorded: Optional[Dict[str, torch.Tensor]] = None
        self._recorded_inputs: Dict[str, torch.Tensor] = {}
        self._validate_structure()

    def _validate_structure(self) -> None:
        available = set(self.input_shapes)
        seen_names = set()
        for node in self.nodes:
            if node.name in seen_names:
                raise InvalidInputError(f"Duplicate node name '{node.name}'")
            seen_names.add(node.name)
            missing = [name for name in node.inputs if name not in available]
            if missing:
                raise InvalidInputError(f"Node '{node.name}' reads undefined values {missing}")
            if node.output in available:
                raise InvalidInputError(f"Node '{node.name}' redefines value '{node.output}'")
            available.add(node.output)
        unknown = [name for name in self.outputs if name not in available]
        if unknown:
            raise InvalidInputError(f"Graph outputs {unknown} are never produced")

    def _check_inputs(self, inputs: Mapping[str, torch.Tensor]) -> None:
        missing = set(self.input_shapes) - set(inputs)
        if missing:
            raise InvalidInputError(f"Missing graph inputs: {sorted(missing)}")
        for name, declared in self.input_shapes.items():
            actual = tuple(inputs[name].shape)
            if len(actual) != len(declared) or any(d is not None and d != a for d, a in zip(declared, actual)):
                raise InvalidInputError(f"Input '{name}' has shape {actual}, graph declares {declared}")

    def forward(self, inputs: Mapping[str, torch.Tensor]) -> Dict[str, torch.Tensor]:
        """
        Evaluate the graph without recording it for backward.

        Args:
            inputs: Tensors keyed by input name

        Returns:
            Tensors keyed by output name
        """
        self._check_inputs(inputs)
        values: Dict[str, torch.Tensor] = dict(inputs)
        for node in self.nodes:
            try:
                values[node.output] = self.ops[node.name](*[values[name] for name in node.inputs])
            except InvalidInputError as e:
                raise InvalidInputError(f"Node '{node.name}': {e}") from e
            except (RuntimeError, ValueError, IndexError) as e:
                raise InvalidInputError(f"Node '{node.name}' failed on its inputs: {e}") from e
        return {name: values[name] for name in self.outputs}


def forward(graph: OperatorGraph, inputs: Mapping[str, torch.Tensor]) -> Dict[str, torch.Tensor]:
    """
    Run the graph and record the outputs for a following backward call.

    Args:
        graph: Operator graph
        inputs: Tensors keyed by input name

    Returns:
        Tensors keyed by output name
    """
    outputs = graph(inputs)
    graph._recorded = outputs
    graph._recorded_inputs = {k: v for k, v in inputs.items() if v.requires_grad}
    return outputs


def gradients(loss: torch.Tensor, named_tensors: Iterable[Tuple[str, torch.Tensor]],
              retain_graph: bool = False) -> Dict[str, torch.Tensor]:
    """
    Gradients of a scalar with respect to named tensors.

    Args:
        loss: Scalar tensor
        named_tensors: (name, tensor) pairs to differentiate against
        retain_graph: Keep the autograd graph for another pass

    Returns:
        Gradient per name, same shape as the tensor
    """
    if loss.numel() != 1:
        raise InvalidInputError(f"Backward needs a scalar output, got shape {tuple(loss.shape)}")
    pairs = list(named_tensors)
    if not pairs:
        return {}
    grads = torch.autograd.grad(loss.reshape(()), [t for _, t in pairs], retain_graph=retain_graph,
                                allow_unused=True)
    result = {}
    for (name, tensor), grad in zip(pairs, grads):
        if grad is None:
            raise InvalidInputError(f"Parameter '{name}' is not reachable from the loss")
        result[name] = grad
    return result


def backward(graph: OperatorGraph, loss_output: Optional[str] = None) -> Dict[str, torch.Tensor]:
    """
    Reverse-mode gradients of a recorded scalar output.

    Args:
        graph: Operator graph on which forward() was run
        loss_output: Output name holding the scalar loss (the first output by default)

    Returns:
        Gradients keyed by parameter name, plus graph inputs that require gradients
    """
    if graph._recorded is None:
        raise StateError("backward() called before forward()")
    name = loss_output or graph.outputs[0]
    if name not in graph._recorded:
        raise InvalidInputError(f"Unknown graph output '{name}'")

    targets = [(n, p) for n, p in graph.named_parameters() if p.requires_grad]
    targets += list(graph._recorded_inputs.items())
    try:
        return gradients(graph._recorded[name], targets)
    finally:
        graph._recorded = None
        graph._recorded_inputs = {}
