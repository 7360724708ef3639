"""
Run Configuration Module

This module defines the toy-corpus configuration and the run configuration
that describes one training/evaluation run (variant, placement, optimizer
settings and all nested model configs). A run is stored as one JSON file.
"""

from typing import Any, Dict, List, Literal, Optional, Tuple

from pydantic import Field, NonNegativeInt, PositiveFloat, PositiveInt, model_validator

from dsp.features import MfccConfig
from dsp.stft import StftConfig
from enhancer.network import EnhancerConfig
from evaluation.losses import LossConfig
from pbdr.modulation import MapperConfig
from phoneme.classifier import ClassifierConfig
from utils.config import ConfigModel
from utils.utils import SAMPLE_RATE

Variant = Literal["baseline", "concat", "cascade", "pbdr", "e_pbdr"]

VARIANTS: Tuple[str, ...] = ("baseline", "concat", "cascade", "pbdr", "e_pbdr")
PLACED_VARIANTS: Tuple[str, ...] = ("concat", "pbdr", "e_pbdr")
CLASSIFIER_VARIANTS: Tuple[str, ...] = ("concat", "cascade", "pbdr", "e_pbdr")

# Classifier pretraining steps used by the cascade variant when none are configured
DEFAULT_CASCADE_PRETRAIN_STEPS = 300


class ToyCorpusConfig(ConfigModel):
    """Synthetic pseudo-phoneme corpus."""

    n_classes: PositiveInt = 8
    formants_min: PositiveInt = 2
    formants_max: PositiveInt = 3
    formant_fmin: PositiveFloat = 200.0
    formant_fmax: PositiveFloat = 3500.0
    formant_step: PositiveFloat = 100.0
    utterance_min_s: PositiveFloat = 1.0
    utterance_max_s: PositiveFloat = 2.0
    segment_min_ms: PositiveFloat = 80.0
    segment_max_ms: PositiveFloat = 300.0
    ramp_ms: float = 10.0
    peak_amplitude: PositiveFloat = 0.5
    noise_type: Literal["white", "pink"] = "white"
    noise_length_factor: float = 1.5
    snr_min_db: float = -5.0
    snr_max_db: float = 25.0
    n_train: NonNegativeInt = 200
    n_test: NonNegativeInt = 50
    train_mixtures: PositiveInt = 2
    test_mixtures: PositiveInt = 1
    hop_ms: PositiveFloat = 10.0
    seed: int = 0
    sample_rate: PositiveInt = SAMPLE_RATE

    @model_validator(mode="after")
    def _check(self) -> "ToyCorpusConfig":
        if self.formants_min > self.formants_max:
            raise ValueError("formants_min must not exceed formants_max")
        if not self.formant_fmin < self.formant_fmax < self.sample_rate / 2:
            raise ValueError("formant range must lie below the Nyquist frequency")
        if self.n_classes * self.formants_max > len(self.formant_grid()):
            raise ValueError("formant grid is too small for distinct formants per class")
        if self.utterance_min_s > self.utterance_max_s or self.segment_min_ms > self.segment_max_ms:
            raise ValueError("minimum durations must not exceed maximum durations")
        if self.ramp_ms < 0 or 2 * self.ramp_ms > self.segment_min_ms:
            raise ValueError("ramps must fit twice into the shortest segment")
        if self.noise_length_factor < 1.0:
            raise ValueError("noise_length_factor must be at least 1")
        if self.snr_min_db > self.snr_max_db:
            raise ValueError("snr_min_db must not exceed snr_max_db")
        return self

    def formant_grid(self) -> List[float]:
        """Candidate formant frequencies in Hz."""
        n = int((self.formant_fmax - self.formant_fmin) // self.formant_step) + 1
        return [self.formant_fmin + i * self.formant_step for i in range(n)]


class RunConfig(ConfigModel):
    """One training/evaluation run."""

    variant: Variant = "baseline"
    placement: Optional[Literal[1, 2]] = None
    lr_enhancer: PositiveFloat = 0.0002
    lr_classifier: PositiveFloat = 0.001
    batch_size: PositiveInt = 8
    epochs: PositiveInt = 30
    max_steps: Optional[PositiveInt] = None
    checkpoint_every: NonNegativeInt = 100
    pretrain_classifier_steps: Optional[NonNegativeInt] = None
    seed: int = 0
    stage1_checkpoint: Optional[str] = None
    stft: StftConfig = Field(default_factory=StftConfig)
    mfcc: MfccConfig = Field(default_factory=MfccConfig)
    classifier: ClassifierConfig = Field(default_factory=lambda: ClassifierConfig(n_classes=8))
    mapper: MapperConfig = Field(default_factory=MapperConfig)
    enhancer: EnhancerConfig = Field(default_factory=EnhancerConfig)
    loss: LossConfig = Field(default_factory=lambda: LossConfig(reduction="mean"))

    @model_validator(mode="after")
    def _check(self) -> "RunConfig":
        if self.variant in PLACED_VARIANTS and self.placement is None:
            raise ValueError(f"variant '{self.variant}' needs a placement (1 or 2)")
        if self.variant not in PLACED_VARIANTS and self.placement is not None:
            raise ValueError(f"variant '{self.variant}' does not take a placement")
        if self.mfcc.hop_length != self.stft.hop_length or self.mfcc.center_pad != self.stft.center_pad:
            raise ValueError("MFCC and STFT must share hop and padding mode for frame alignment")
        if self.mfcc.sample_rate != self.stft.sample_rate:
            raise ValueError("MFCC and STFT sample rates differ")
        if self.classifier.n_inputs != self.mfcc.n_coeffs:
            raise ValueError("classifier.n_inputs must equal mfcc.n_coeffs")
        return self

    @property
    def has_classifier(self) -> bool:
        return self.variant in CLASSIFIER_VARIANTS

    @property
    def label(self) -> str:
        """Short run label, e.g. 'baseline' or 'pbdr_2'."""
        return self.variant if self.placement is None else f"{self.variant}_{self.placement}"

    def pretrain_steps(self) -> int:
        """Classifier pretraining steps for this run."""
        if self.pretrain_classifier_steps is not None:
            return self.pretrain_classifier_steps if self.has_classifier else 0
        return DEFAULT_CASCADE_PRETRAIN_STEPS if self.variant == "cascade" else 0


def flatten_config(data: Dict[str, Any], prefix: str = "") -> Dict[str, Any]:
    """
    Flatten nested config dictionaries into dotted keys.

    Args:
        data: Nested dictionary
        prefix: Key prefix

    Returns:
        Flat dictionary, e.g. {"stft.window_ms": 20.0}
    """
    flat: Dict[str, Any] = {}
    for key, value in data.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            flat.update(flatten_config(value, f"{name}."))
        else:
            flat[name] = value
    return flat
