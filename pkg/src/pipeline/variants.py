"""
Model Variants Module

This module wires the classifier, the conditioning hook and the enhancer into
one ModelBundle per experiment variant:

    baseline   enhancer only
    pbdr       classifier on noisy MFCC -> PbDr modulation at the placement layer
    concat     classifier on noisy MFCC -> posteriors projected to a few channels,
               tiled over frequency and concatenated at the placement layer
    cascade    enhancer -> enhanced waveform -> MFCC -> (pretrained) classifier
    e_pbdr     frozen stage-1 baseline enhancer -> MFCC of its output ->
               classifier -> PbDr modulation of a stage-2 enhancer
"""

from dataclasses import dataclass
from pathlib import Path
from typing import List, Mapping, Optional, Tuple, Union

import torch
import torch.nn as nn

from dsp.audio import Waveform
from dsp.features import mfcc_tensor
from dsp.stft import istft_tensor, stft_tensor
from enhancer.network import Enhancer
from enhancer.spectrum import reconstruct_tensor
from nnkernel.checkpoint import load_checkpoint, save_checkpoint
from nnkernel.optim import named_trainable
from phoneme.classifier import PhonemeClassifier
from pipeline.config import RunConfig
from utils.errors import AlignmentError, CheckpointError, ConfigError, InvalidInputError
from utils.logging_utils import get_logger
from utils.utils import child_seed

logger = get_logger(__name__)

_CONDITIONING = {"pbdr": "pbdr", "e_pbdr": "pbdr", "concat": "concat"}


@dataclass
class UtteranceOutput:
    """Forward pass of one utterance."""

    spec: torch.Tensor
    s_hat: torch.Tensor
    probs: Optional[torch.Tensor]
    length: int


class ModelBundle(nn.Module):
    """Parameters and wiring of one variant."""

    def __init__(self,
                 config: RunConfig,
                 enhancer: Enhancer,
                 classifier: Optional[PhonemeClassifier] = None,
                 stage1: Optional[Enhancer] = None):
        """
        Initialize the bundle.

        Args:
            config: Run configuration
            enhancer: Enhancement network (with its conditioning hook)
            classifier: Phoneme classifier for variants that use one
            stage1: Frozen first-stage enhancer of the e_pbdr variant
        """
        super().__init__()
        self.config = config
        self.enhancer = enhancer
        self.classifier = classifier
        self.stage1 = stage1

    @property
    def variant(self) -> str:
        return self.config.variant

    @property
    def dtype(self) -> torch.dtype:
        return next(self.enhancer.parameters()).dtype

    def param_groups(self) -> List[Tuple[Mapping[str, nn.Parameter], float]]:
        """(named trainable parameters, learning rate) for the enhancer and the classifier."""
        groups = [(named_trainable(self.enhancer, "enhancer."), self.config.lr_enhancer)]
        if self.classifier is not None:
            groups.append((named_trainable(self.classifier, "classifier."), self.config.lr_classifier))
        return groups

    def _stage1_estimate(self, spec: torch.Tensor, length: int) -> torch.Tensor:
        with torch.no_grad():
            gain, phase = self.stage1(spec.unsqueeze(0))
            s1 = reconstruct_tensor(gain, phase, spec.unsqueeze(0))[0]
            return istft_tensor(s1, self.config.stft, length)

    def classifier_features(self, noisy: torch.Tensor, clean: Optional[torch.Tensor] = None) -> torch.Tensor:
        """
        MFCC frames the classifier is trained on, used for its normalization statistics.

        Args:
            noisy: Noisy samples (N,)
            clean: Clean samples (N,), used by the cascade variant

        Returns:
            MFCC tensor (T, n_coeffs)
        """
        if self.variant == "cascade":
            source = clean if clean is not None else noisy
        elif self.variant == "e_pbdr":
            source = self._stage1_estimate(stft_tensor(noisy, self.config.stft), noisy.shape[-1])
        else:
            source = noisy
        with torch.no_grad():
            return mfcc_tensor(source, self.config.mfcc)

    def _classify(self, samples: torch.Tensor, n_frames: int) -> torch.Tensor:
        probs = self.classifier(mfcc_tensor(samples, self.config.mfcc).unsqueeze(0))
        if probs.shape[1] != n_frames:
            raise AlignmentError(n_frames, probs.shape[1], what="MFCC posteriors")
        return probs

    def forward_utterance(self, noisy: torch.Tensor) -> UtteranceOutput:
        """
        Run the variant on one noisy waveform.

        Args:
            noisy: Noisy samples (N,)

        Returns:
            Noisy spectrum, estimated spectrum and posteriors (None for baseline)
        """
        length = noisy.shape[-1]
        spec = stft_tensor(noisy, self.config.stft)
        batch = spec.unsqueeze(0)
        probs = None

        if self.variant == "baseline":
            gain, phase = self.enhancer(batch)
        elif self.variant in ("pbdr", "concat"):
            probs = self._classify(noisy, spec.shape[0])
            gain, phase = self.enhancer(batch, probs)
        elif self.variant == "cascade":
            gain, phase = self.enhancer(batch)
            estimate = istft_tensor(reconstruct_tensor(gain, phase, batch)[0], self.config.stft, length)
            probs = self._classify(estimate, spec.shape[0])
        else:
            probs = self._classify(self._stage1_estimate(spec, length), spec.shape[0])
            gain, phase = self.enhancer(batch, probs)

        s_hat = reconstruct_tensor(gain, phase, batch)[0]
        return UtteranceOutput(spec, s_hat, None if probs is None else probs[0], length)


def load_stage1(enhancer: Enhancer, checkpoint_dir: Union[str, Path]) -> None:
    """
    Load the enhancer weights of a baseline checkpoint into a stage-1 enhancer.

    Args:
        enhancer: Unconditioned enhancer
        checkpoint_dir: Baseline checkpoint directory
    """
    tensors, metadata = load_checkpoint(checkpoint_dir)
    variant = metadata.get("run_config", {}).get("variant")
    if variant != "baseline":
        raise CheckpointError(f"Stage-1 checkpoint {checkpoint_dir} holds a '{variant}' run, expected 'baseline'")
    state = {name[len("enhancer."):]: t for name, t in tensors.items() if name.startswith("enhancer.")}
    try:
        enhancer.load_state_dict(state, strict=True)
    except RuntimeError as e:
        raise CheckpointError(f"Stage-1 checkpoint {checkpoint_dir} does not fit the enhancer: {e}") from e


def build_variant(rc: RunConfig, load_stage1_weights: bool = True) -> ModelBundle:
    """
    Build the model bundle of a run.

    Args:
        rc: Run configuration
        load_stage1_weights: Load the e_pbdr stage-1 enhancer from rc.stage1_checkpoint

    Returns:
        Freshly initialized bundle (stage 1 loaded and frozen for e_pbdr)
    """
    if rc.variant == "e_pbdr" and load_stage1_weights and not rc.stage1_checkpoint:
        raise ConfigError("variant 'e_pbdr' needs stage1_checkpoint (a trained baseline checkpoint)")

    torch.manual_seed(child_seed(rc.seed, "init"))
    n_bins = rc.stft.n_bins
    classifier = PhonemeClassifier(rc.classifier) if rc.has_classifier else None
    enhancer = Enhancer(rc.enhancer, n_bins, _CONDITIONING.get(rc.variant, "none"), rc.placement,
                        rc.classifier.n_classes, rc.mapper)

    stage1 = None
    if rc.variant == "e_pbdr":
        stage1 = Enhancer(rc.enhancer, n_bins)
        if load_stage1_weights:
            load_stage1(stage1, rc.stage1_checkpoint)
            # stage 2 starts from the stage-1 enhancement weights
            enhancer.load_state_dict(stage1.state_dict(), strict=False)
        stage1.requires_grad_(False)

    bundle = ModelBundle(rc, enhancer, classifier, stage1)
    logger.debug("Built %s bundle with %d trainable parameters", rc.label,
                 sum(p.numel() for p in bundle.parameters() if p.requires_grad))
    return bundle


def save_bundle(bundle: ModelBundle, directory: Union[str, Path], complete: bool = True) -> str:
    """
    Save a bundle as a checkpoint directory.

    Args:
        bundle: Model bundle
        directory: Checkpoint directory
        complete: False for the initial and periodic checkpoints of a run still training

    Returns:
        The checkpoint hash
    """
    metadata = {"run_config": bundle.config.to_dict(), "complete": complete}
    return save_checkpoint(directory, bundle.state_dict(), metadata)


def load_bundle(directory: Union[str, Path]) -> ModelBundle:
    """
    Load a bundle from a checkpoint directory.

    Args:
        directory: Checkpoint directory

    Returns:
        The bundle (float32)
    """
    tensors, metadata = load_checkpoint(directory)
    if "run_config" not in metadata:
        raise CheckpointError(f"Checkpoint {directory} has no run configuration")
    bundle = build_variant(RunConfig.from_dict(metadata["run_config"]), load_stage1_weights=False)
    try:
        bundle.load_state_dict(tensors, strict=True)
    except RuntimeError as e:
        raise CheckpointError(f"Checkpoint {directory} does not match its run configuration: {e}") from e
    return bundle


def enhance_waveform(c: Waveform, bundle: ModelBundle) -> Waveform:
    """
    Enhance a noisy waveform.

    Args:
        c: Noisy waveform
        bundle: Model bundle

    Returns:
        Enhanced waveform of the same length
    """
    expected_rate = bundle.config.stft.sample_rate
    if c.sample_rate != expected_rate:
        raise InvalidInputError(f"Expected {expected_rate} Hz audio, got {c.sample_rate} Hz")
    with torch.no_grad():
        out = bundle.forward_utterance(torch.from_numpy(c.samples).to(bundle.dtype))
        samples = istft_tensor(out.s_hat, bundle.config.stft, out.length)
    return Waveform(samples.double().numpy(), c.sample_rate)
