"""
Gradient Diagnostics Module

This module builds the gradient-check suite: one small operator graph per
operator of the network substrate (fed by trainable leaves and reduced to a
scalar with a fixed random weighting), the PbDr mapper + modulation path, and
the complete objective of a micro PbDrNet. Each case is checked against
central finite differences in double precision over several seeds.
"""

from typing import Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import torch
import torch.nn as nn
from tqdm import tqdm

from dsp.features import MfccConfig, feature_statistics, mfcc_tensor
from dsp.stft import StftConfig, stft_tensor
from enhancer.network import EnhancerConfig
from evaluation.losses import LossConfig
from nnkernel.gradcheck import grad_check
from nnkernel.graph import GraphNode, OperatorGraph, backward, forward
from nnkernel.layers import (
    Add, BiGRU, Concat, FrameSoftmax, FrequencyMaxPool, FrequencyUpsample, Highway, L1Distance, Leaf,
    Multiply, NllGather, TimeMaxPool, WeightedSum,
)
from pbdr.modulation import MapperConfig, PbdrModulation
from phoneme.classifier import ClassifierConfig
from pipeline.config import RunConfig
from pipeline.trainer import TrainingExample, example_loss
from pipeline.variants import ModelBundle, build_variant
from utils.errors import InvalidInputError
from utils.logging_utils import get_logger
from utils.utils import child_seed

logger = get_logger(__name__)

GRADCHECK_TOLERANCE = 1e-4
GRADCHECK_EPS = 1e-5
MICRO_SAMPLES = 40

Case = Tuple[OperatorGraph, Dict[str, torch.Tensor]]


def _away_from_zero(rng: np.random.Generator, shape: Tuple[int, ...], low: float = 0.1) -> torch.Tensor:
    magnitude = rng.uniform(low, 1.0, size=shape)
    return torch.from_numpy(np.asarray(magnitude * rng.choice([-1.0, 1.0], size=shape)))


def _normal(rng: np.random.Generator, shape: Tuple[int, ...]) -> torch.Tensor:
    return torch.from_numpy(np.asarray(rng.standard_normal(shape)))


def operator_case(op: nn.Module,
                  leaves: Sequence[torch.Tensor],
                  rng: np.random.Generator,
                  extra_inputs: Optional[Mapping[str, torch.Tensor]] = None) -> Case:
    """
    Wrap one operator as leaves -> op -> weighted sum.

    Args:
        op: Operator under test
        leaves: Trainable operator inputs
        rng: Generator of the output weighting
        extra_inputs: Non-trainable graph inputs appended to the operator arguments

    Returns:
        Tuple of (double-precision graph, graph inputs)
    """
    extra_inputs = dict(extra_inputs or {})
    op = op.double()
    with torch.no_grad():
        probe = op(*leaves, *extra_inputs.values())
    weights = _normal(rng, tuple(probe.shape))

    nodes = [GraphNode(f"leaf{i}", Leaf(t), (), f"x{i}") for i, t in enumerate(leaves)]
    nodes.append(GraphNode("op", op, tuple(f"x{i}" for i in range(len(leaves))) + tuple(extra_inputs), "y"))
    nodes.append(GraphNode("reduce", WeightedSum(weights), ("y",), "loss"))
    shapes = {name: tuple(t.shape) for name, t in extra_inputs.items()}
    return OperatorGraph(nodes, shapes, ["loss"]).double(), extra_inputs


def _dense(rng):
    d_in, d_out, batch = (int(v) for v in rng.integers(2, 6, size=3))
    return operator_case(nn.Linear(d_in, d_out), [_normal(rng, (batch, d_in))], rng)


def _conv2d(rng):
    c_in, c_out, t, f = (int(v) for v in rng.integers(1, 5, size=4))
    return operator_case(nn.Conv2d(c_in, c_out, (3, 3), padding="same"), [_normal(rng, (1, c_in, t + 1, f + 2))], rng)


def _conv1d(rng):
    c_in, c_out, t = (int(v) for v in rng.integers(1, 5, size=3))
    k = int(rng.choice([1, 2, 3]))
    return operator_case(nn.Conv1d(c_in, c_out, k, padding="same"), [_normal(rng, (1, c_in, t + 2))], rng)


def _upsample(rng):
    c_in, c_out, t, f_in = (int(v) for v in rng.integers(1, 4, size=4))
    f_out = 2 * f_in - 1 + int(rng.integers(2))
    op = FrequencyUpsample(c_in, c_out, (3, 3), f_in, f_out)
    return operator_case(op, [_normal(rng, (1, c_in, t, f_in))], rng)


def _frequency_pool(rng):
    c, t, f = (int(v) for v in rng.integers(1, 6, size=3))
    return operator_case(FrequencyMaxPool(), [_normal(rng, (1, c, t, f + 1))], rng)


def _time_pool(rng):
    c, t = (int(v) for v in rng.integers(1, 6, size=2))
    return operator_case(TimeMaxPool(), [_normal(rng, (1, c, t + 1))], rng)


def _shape(rng) -> Tuple[int, ...]:
    return tuple(int(v) for v in rng.integers(1, 5, size=int(rng.integers(1, 4))))


def _add(rng):
    shape = _shape(rng)
    return operator_case(Add(), [_normal(rng, shape), _normal(rng, shape)], rng)


def _multiply(rng):
    shape = _shape(rng)
    return operator_case(Multiply(), [_normal(rng, shape), _normal(rng, shape)], rng)


def _concat(rng):
    c1, c2, t, f = (int(v) for v in rng.integers(1, 4, size=4))
    return operator_case(Concat(), [_normal(rng, (1, c1, t, f)), _normal(rng, (1, c2, t, f))], rng)


def _elementwise(op_factory: Callable[[], nn.Module], kinked: bool = False):
    def build(rng):
        shape = _shape(rng)
        value = _away_from_zero(rng, shape) if kinked else _normal(rng, shape)
        return operator_case(op_factory(), [value], rng)
    return build


def _softmax(rng):
    t, n_classes = (int(v) for v in rng.integers(1, 6, size=2))
    return operator_case(FrameSoftmax(), [_normal(rng, (1, t, n_classes + 1))], rng)


def _gru(rng):
    d, h = (int(v) for v in rng.integers(1, 4, size=2))
    return operator_case(BiGRU(d, h), [_normal(rng, (1, 5, d))], rng)


def _highway(rng):
    width, batch = (int(v) for v in rng.integers(1, 5, size=2))
    return operator_case(Highway(width), [_normal(rng, (batch, width))], rng)


def _l1(rng):
    shape = _shape(rng)
    a = _normal(rng, shape)
    return operator_case(L1Distance(), [a, a + _away_from_zero(rng, shape)], rng)


def _nll(rng):
    t, n_classes = (int(v) for v in rng.integers(1, 6, size=2))
    probs = torch.from_numpy(rng.uniform(0.1, 1.0, size=(t, n_classes + 1)))
    labels = torch.from_numpy(rng.integers(n_classes + 1, size=t))
    return operator_case(NllGather(), [probs], rng, {"labels": labels})


def randomize_mapper(modulation: PbdrModulation, rng: np.random.Generator) -> None:
    """
    Replace the identity-initialized mapper output layers with random weights.

    Args:
        modulation: Conditioning module whose mapper is changed in place
        rng: Generator
    """
    mapper = modulation.mapper
    with torch.no_grad():
        for net in (mapper.gamma_net, mapper.beta_net):
            layer = net[-1]
            layer.weight.copy_(_normal(rng, tuple(layer.weight.shape)).to(layer.weight.dtype) * 0.5)
            layer.bias.copy_(_normal(rng, tuple(layer.bias.shape)).to(layer.bias.dtype) * 0.5)


def _modulation(rng):
    channels, t, n_bins, n_classes, hidden = (int(v) for v in rng.integers(1, 5, size=5))
    op = PbdrModulation(n_classes + 1, n_bins, MapperConfig(hidden=hidden)).double()
    randomize_mapper(op, rng)
    probs = torch.from_numpy(rng.dirichlet(np.ones(n_classes + 1), size=(1, t)))
    return operator_case(op, [_normal(rng, (1, channels, t, n_bins)), probs], rng)


class MicroObjective(nn.Module):
    """Combined objective of a model bundle on one fixed utterance, as a parameterless-input operator."""

    def __init__(self, bundle: ModelBundle, example: TrainingExample, loss_cfg: LossConfig):
        super().__init__()
        self.bundle = bundle
        self.example = example
        self.loss_cfg = loss_cfg

    def forward(self) -> torch.Tensor:
        total, _, _ = example_loss(self.bundle, self.example, self.loss_cfg)
        return total


def micro_run_config(variant: str = "pbdr", placement: Optional[int] = 2, seed: int = 0) -> RunConfig:
    """
    Tiny PbDrNet configuration: 6 frames of 9 bins, two-channel layers, tanh activations.

    Args:
        variant: Model variant
        placement: Conditioning placement
        seed: Initialization seed

    Returns:
        The run configuration
    """
    return RunConfig(
        variant=variant,
        placement=placement,
        seed=seed,
        stft=StftConfig(window_ms=1.0, hop_ms=0.5, fft_size=16),
        mfcc=MfccConfig(window_ms=2.0, hop_ms=0.5, fft_size=32, n_mels=4, n_coeffs=4),
        classifier=ClassifierConfig(n_inputs=4, bank_size=2, bank_channels=4, projection_channels=4,
                                    highway_layers=1, highway_width=4, gru_hidden=4, n_classes=3),
        mapper=MapperConfig(hidden=4),
        enhancer=EnhancerConfig(channels=(2, 2, 2), residual_blocks=1, kernel_size=(3, 3),
                                residual_kernel_size=(3, 3), activation="tanh", concat_channels=2),
        loss=LossConfig(reduction="mean"),
    )


def micro_case(rng: np.random.Generator, rc: Optional[RunConfig] = None) -> Case:
    """
    Full-objective graph of a micro PbDrNet with a random mapper and a random utterance.

    Args:
        rng: Generator of the utterance and the mapper weights
        rc: Micro run configuration (placement 2 PbDr by default)

    Returns:
        Tuple of (double-precision graph, graph inputs)
    """
    rc = rc or micro_run_config()
    bundle = build_variant(rc).double()
    if bundle.enhancer.conditioning == "pbdr":
        randomize_mapper(bundle.enhancer.conditioner, rng)

    noisy = torch.from_numpy(0.3 * rng.standard_normal(MICRO_SAMPLES))
    clean = torch.from_numpy(0.3 * rng.standard_normal(MICRO_SAMPLES))
    if bundle.classifier is not None:
        mean, std = feature_statistics((mfcc_tensor(noisy, rc.mfcc).numpy(),))
        bundle.classifier.set_feature_statistics(mean, std)
    clean_spec = stft_tensor(clean, rc.stft)
    labels = torch.from_numpy(rng.integers(rc.classifier.n_classes, size=clean_spec.shape[0]))
    example = TrainingExample("micro", noisy, clean, clean_spec, labels, MICRO_SAMPLES)

    graph = OperatorGraph([GraphNode("objective", MicroObjective(bundle, example, rc.loss), (), "loss")], {}, ["loss"])
    return graph, {}


OPERATOR_CASES: Dict[str, Callable[[np.random.Generator], Case]] = {
    "dense": _dense,
    "conv2d": _conv2d,
    "conv1d": _conv1d,
    "frequency_upsample": _upsample,
    "frequency_max_pool": _frequency_pool,
    "time_max_pool": _time_pool,
    "add": _add,
    "multiply": _multiply,
    "concat": _concat,
    "sigmoid": _elementwise(nn.Sigmoid),
    "tanh": _elementwise(nn.Tanh),
    "relu": _elementwise(nn.ReLU, kinked=True),
    "softmax": _softmax,
    "gru": _gru,
    "highway": _highway,
    "l1_distance": _l1,
    "nll_gather": _nll,
    "pbdr_modulation": _modulation,
    "micro_pbdrnet": micro_case,
}


def build_case(name: str, seed: int) -> Case:
    """
    Build one gradient-check case.

    Args:
        name: Case name (a key of OPERATOR_CASES)
        seed: Seed of shapes, values and initialization

    Returns:
        Tuple of (graph, inputs)
    """
    if name not in OPERATOR_CASES:
        raise InvalidInputError(f"Unknown gradient-check case '{name}'; choose from {sorted(OPERATOR_CASES)}")
    torch.manual_seed(child_seed(seed, name, "init"))
    return OPERATOR_CASES[name](np.random.default_rng(child_seed(seed, name)))


def dead_parameters(graph: OperatorGraph, inputs: Mapping[str, torch.Tensor]) -> List[str]:
    """
    Parameters whose gradient is exactly zero everywhere.

    Args:
        graph: Graph with a scalar first output
        inputs: Graph inputs

    Returns:
        Names of parameters with an all-zero gradient
    """
    forward(graph, inputs)
    grads = backward(graph)
    return [name for name, grad in grads.items() if not torch.any(grad != 0)]


def run_gradcheck(cases: Optional[Iterable[str]] = None,
                  seeds: Iterable[int] = range(5),
                  eps: float = GRADCHECK_EPS,
                  tolerance: float = GRADCHECK_TOLERANCE,
                  progress: bool = False) -> pd.DataFrame:
    """
    Run the gradient-check suite.

    Args:
        cases: Case names (all by default)
        seeds: Seeds per case
        eps: Finite-difference step
        tolerance: Largest accepted relative error
        progress: Show a progress bar

    Returns:
        One row per (case, seed) with the max relative error and a pass flag
    """
    names = list(cases) if cases is not None else list(OPERATOR_CASES)
    jobs = [(name, seed) for name in names for seed in seeds]
    rows = []
    for name, seed in tqdm(jobs, desc="Gradient checks", disable=not progress):
        graph, inputs = build_case(name, seed)
        error = grad_check(graph, inputs, eps=eps)
        rows.append({"case": name, "seed": seed, "max_rel_error": error, "passed": error < tolerance})
        if error >= tolerance:
            logger.warning("Gradient check %s (seed %d) failed: relative error %.3e", name, seed, error)
    return pd.DataFrame(rows, columns=["case", "seed", "max_rel_error", "passed"])
