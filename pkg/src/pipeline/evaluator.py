"""
Evaluator Module

This module scores a trained bundle on one corpus split. Every utterance gets
SSNR and SNR of the enhanced output, the same metrics for the unprocessed
noisy input, classifier top-1/top-3 frame accuracy where the variant has a
classifier, and the loss components.

Outputs:
    report.csv      one row per utterance
    summary.json    aggregate means plus run metadata
"""

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Union

import numpy as np
import pandas as pd
import torch
from tqdm import tqdm

from dsp.audio import Waveform
from dsp.stft import istft_tensor
from evaluation.losses import LossConfig, combined_loss_tensor
from evaluation.metrics import SsnrConfig, snr_db, ssnr
from nnkernel.checkpoint import checkpoint_hash
from phoneme.classifier import ProbMatrix
from phoneme.losses import topk_accuracy
from pipeline.corpus import Utterance, load_split
from pipeline.trainer import prepare_examples
from pipeline.variants import ModelBundle, load_bundle
from utils.errors import InvalidInputError
from utils.logging_utils import get_logger
from utils.utils import ensure_directory_exists, save_json

logger = get_logger(__name__)

REPORT_COLUMNS = [
    "utterance_id", "ssnr_db", "snr_db", "top1", "top3",
    "loss_total", "loss_spectral", "loss_phoneme", "noisy_ssnr_db", "noisy_snr_db",
]
METRIC_COLUMNS = REPORT_COLUMNS[1:]


@dataclass
class MetricsReport:
    """Per-utterance metric rows, their means and run metadata."""

    rows: pd.DataFrame
    metadata: Dict[str, Any] = field(default_factory=dict)

    @property
    def aggregates(self) -> Dict[str, float]:
        """Mean of every metric column (NaN for columns without values)."""
        means = {}
        for column in METRIC_COLUMNS:
            values = self.rows[column].astype(float)
            finite = values[np.isfinite(values)]
            means[column] = float(finite.mean()) if len(finite) else math.nan
        return means

    def save(self, output_dir: Union[str, Path]) -> None:
        """
        Write report.csv and summary.json.

        Args:
            output_dir: Output directory
        """
        out = Path(output_dir)
        ensure_directory_exists(out)
        self.rows.to_csv(out / "report.csv", index=False)
        aggregates = {k: (None if math.isnan(v) else v) for k, v in self.aggregates.items()}
        save_json({"aggregates": aggregates, "metadata": self.metadata}, out / "summary.json")


def evaluate_bundle(bundle: ModelBundle,
                    utterances: Sequence[Utterance],
                    loss_cfg: Optional[LossConfig] = None,
                    ssnr_cfg: SsnrConfig = SsnrConfig(),
                    metadata: Optional[Dict[str, Any]] = None,
                    progress: bool = False) -> MetricsReport:
    """
    Score a bundle on loaded utterances.

    Args:
        bundle: Model bundle
        utterances: Utterances to score
        loss_cfg: Loss configuration of the reported loss (the run's own by default)
        ssnr_cfg: SSNR configuration
        metadata: Extra metadata for the report
        progress: Show a progress bar

    Returns:
        The metrics report
    """
    if not utterances:
        raise InvalidInputError("Cannot evaluate an empty split")
    loss_cfg = loss_cfg or bundle.config.loss
    examples = prepare_examples(utterances, bundle.config, bundle.dtype)

    rows = []
    bundle.eval()
    with torch.no_grad():
        for utt, example in tqdm(list(zip(utterances, examples)), desc="Evaluating", disable=not progress):
            out = bundle.forward_utterance(example.noisy)
            estimate = Waveform(istft_tensor(out.s_hat, bundle.config.stft, out.length).double().numpy(),
                                utt.clean.sample_rate)
            labels = example.labels if out.probs is not None else None
            total, spectral, phoneme = combined_loss_tensor(out.s_hat, example.clean_spec, out.probs, labels,
                                                            loss_cfg, bundle.config.stft, example.length)

            top1 = top3 = math.nan
            if out.probs is not None:
                probs = ProbMatrix(out.probs.double().numpy())
                top1 = topk_accuracy(probs, utt.labels, 1)
                top3 = topk_accuracy(probs, utt.labels, min(3, probs.n_classes))

            rows.append({
                "utterance_id": utt.utterance_id,
                "ssnr_db": ssnr(utt.clean, estimate, ssnr_cfg),
                "snr_db": snr_db(utt.clean, estimate),
                "top1": top1,
                "top3": top3,
                "loss_total": float(total),
                "loss_spectral": float(spectral),
                "loss_phoneme": math.nan if phoneme is None else float(phoneme),
                "noisy_ssnr_db": ssnr(utt.clean, utt.noisy, ssnr_cfg),
                "noisy_snr_db": snr_db(utt.clean, utt.noisy),
            })

    meta = {
        "variant": bundle.config.variant,
        "placement": bundle.config.placement,
        "seed": bundle.config.seed,
        "n_utterances": len(rows),
    }
    meta.update(metadata or {})
    return MetricsReport(pd.DataFrame(rows, columns=REPORT_COLUMNS), meta)


def evaluate(checkpoint_dir: Union[str, Path],
             corpus_dir: Union[str, Path],
             split: str = "test",
             output_dir: Optional[Union[str, Path]] = None,
             limit: Optional[int] = None,
             progress: bool = True) -> MetricsReport:
    """
    Evaluate a checkpoint on a corpus split.

    Args:
        checkpoint_dir: Checkpoint directory
        corpus_dir: Corpus directory
        split: Split to evaluate
        output_dir: Where to write report.csv and summary.json (nothing written if omitted)
        limit: Evaluate at most this many utterances
        progress: Show a progress bar

    Returns:
        The metrics report
    """
    bundle = load_bundle(checkpoint_dir)
    utterances = load_split(corpus_dir, split, bundle.config.classifier.n_classes, limit)
    if not utterances:
        raise InvalidInputError(f"Split '{split}' of {corpus_dir} is empty")

    report = evaluate_bundle(bundle, utterances, metadata={
        "checkpoint_hash": checkpoint_hash(checkpoint_dir),
        "checkpoint": str(checkpoint_dir),
        "split": split,
    }, progress=progress)
    if output_dir is not None:
        report.save(output_dir)
    logger.info("Evaluated %s on %d %s utterances: SSNR %.2f dB", bundle.config.label, len(utterances), split,
                report.aggregates["ssnr_db"])
    return report
