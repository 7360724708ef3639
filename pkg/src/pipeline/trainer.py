"""
Trainer Module

This module trains a model bundle on the toy corpus with Adam, minimizing the
combined spectral + phoneme objective. Batches follow a seeded permutation per
epoch, so a run is fully determined by its RunConfig and the corpus.

Outputs in the run directory:
    checkpoint/         latest checkpoint (replaced atomically)
    run_config.json     the RunConfig
    train_log.csv       per-step losses, preceded by '# key=value' config lines
"""

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import torch
from tqdm import tqdm

from dsp.features import feature_statistics
from dsp.stft import stft_tensor
from evaluation.losses import LossConfig, combined_loss_tensor
from nnkernel.graph import gradients
from nnkernel.optim import AdamState, adam_step, named_trainable
from phoneme.classifier import PhonemeClassifier
from phoneme.losses import phoneme_loss_tensor
from pipeline.config import RunConfig, flatten_config
from pipeline.corpus import Utterance, load_split
from pipeline.variants import ModelBundle, build_variant, save_bundle
from utils.errors import InvalidInputError, TrainingError
from utils.logging_utils import get_logger
from utils.utils import child_seed, ensure_directory_exists, seed_everything

logger = get_logger(__name__)

CHECKPOINT_DIR = "checkpoint"
LOG_FILE = "train_log.csv"


@dataclass
class TrainingExample:
    """Tensors of one utterance, ready for the forward pass."""

    utterance_id: str
    noisy: torch.Tensor
    clean: torch.Tensor
    clean_spec: torch.Tensor
    labels: torch.Tensor
    length: int


@dataclass
class TrainResult:
    """Outcome of a training run."""

    run_dir: Path
    checkpoint_dir: Path
    checkpoint_hash: str
    log: pd.DataFrame
    steps: int


def prepare_examples(utterances: Sequence[Utterance], rc: RunConfig,
                     dtype: torch.dtype = torch.float32) -> List[TrainingExample]:
    """
    Convert utterances to tensors and check frame alignment.

    Args:
        utterances: Loaded utterances
        rc: Run configuration
        dtype: Real dtype of the tensors

    Returns:
        One example per utterance
    """
    examples = []
    for utt in utterances:
        noisy = torch.from_numpy(utt.noisy.samples).to(dtype)
        clean = torch.from_numpy(utt.clean.samples).to(dtype)
        if noisy.shape != clean.shape:
            raise InvalidInputError(f"Utterance {utt.utterance_id}: clean and noisy lengths differ")
        clean_spec = stft_tensor(clean, rc.stft)
        utt.labels.check_frames(clean_spec.shape[0], what="STFT")
        utt.labels.check_frames(rc.mfcc.num_frames(len(utt.noisy)), what="MFCC")
        examples.append(TrainingExample(
            utterance_id=utt.utterance_id,
            noisy=noisy,
            clean=clean,
            clean_spec=clean_spec,
            labels=torch.from_numpy(utt.labels.labels),
            length=len(utt.noisy),
        ))
    return examples


def example_loss(bundle: ModelBundle, example: TrainingExample,
                 loss_cfg: LossConfig) -> Tuple[torch.Tensor, torch.Tensor, Optional[torch.Tensor]]:
    """
    Combined loss of one utterance.

    Args:
        bundle: Model bundle
        example: Prepared utterance
        loss_cfg: Loss configuration

    Returns:
        Tuple of (total, spectral, phoneme or None)
    """
    out = bundle.forward_utterance(example.noisy)
    labels = example.labels if out.probs is not None else None
    return combined_loss_tensor(out.s_hat, example.clean_spec, out.probs, labels,
                                loss_cfg, bundle.config.stft, example.length)


def batch_loss(bundle: ModelBundle, batch: Sequence[TrainingExample],
               loss_cfg: LossConfig) -> Tuple[torch.Tensor, torch.Tensor, Optional[torch.Tensor]]:
    """
    Mean of the per-utterance losses of a batch.

    Args:
        bundle: Model bundle
        batch: Prepared utterances
        loss_cfg: Loss configuration

    Returns:
        Tuple of (total, spectral, phoneme or None), each averaged over utterances
    """
    totals, spectrals, phonemes = [], [], []
    for example in batch:
        total, spectral, phoneme = example_loss(bundle, example, loss_cfg)
        totals.append(total)
        spectrals.append(spectral)
        if phoneme is not None:
            phonemes.append(phoneme)
    mean_phoneme = torch.stack(phonemes).mean() if phonemes else None
    return torch.stack(totals).mean(), torch.stack(spectrals).mean(), mean_phoneme


def fit_feature_statistics(bundle: ModelBundle, examples: Sequence[TrainingExample]) -> None:
    """
    Set the classifier's MFCC standardization from the training examples.

    Args:
        bundle: Model bundle with a classifier
        examples: Training examples
    """
    frames = [bundle.classifier_features(ex.noisy, ex.clean).double().numpy() for ex in examples]
    mean, std = feature_statistics(tuple(frames))
    bundle.classifier.set_feature_statistics(mean, std)


def pretrain_classifier(classifier: PhonemeClassifier,
                        features: Sequence[Tuple[torch.Tensor, torch.Tensor]],
                        steps: int,
                        lr: float,
                        batch_size: int,
                        seed: int = 0,
                        progress: bool = False) -> List[float]:
    """
    Train the classifier alone on (MFCC, labels) pairs with the phoneme loss.

    Args:
        classifier: Classifier to train in place
        features: (MFCC (T, n_coeffs), labels (T,)) per utterance
        steps: Number of Adam steps
        lr: Learning rate
        batch_size: Utterances per step
        seed: Seed of the batch order
        progress: Show a progress bar

    Returns:
        Mean-per-frame loss of every step
    """
    if not features:
        raise InvalidInputError("Classifier pretraining needs at least one utterance")
    params = named_trainable(classifier, "classifier.")
    state = AdamState.single(params, lr)
    order: List[int] = []
    epoch = 0
    losses = []
    for step in tqdm(range(steps), desc="Pretraining classifier", disable=not progress):
        batch = []
        while len(batch) < min(batch_size, len(features)):
            if not order:
                order = list(np.random.default_rng(child_seed(seed, "pretrain", epoch)).permutation(len(features)))
                epoch += 1
            batch.append(features[order.pop(0)])
        loss = torch.stack([
            phoneme_loss_tensor(classifier(m.unsqueeze(0))[0], y, "mean") for m, y in batch
        ]).mean()
        if not torch.isfinite(loss):
            raise TrainingError(f"Non-finite classifier loss at pretraining step {step}")
        adam_step(params, gradients(loss, params.items()), state)
        losses.append(loss.detach().item())
    return losses


def _write_log(path: Path, rc: RunConfig, rows: List[Dict[str, float]], columns: List[str]) -> pd.DataFrame:
    log = pd.DataFrame(rows, columns=columns)
    with open(path, "w", encoding="utf-8") as f:
        for key, value in flatten_config(rc.to_dict()).items():
            f.write(f"# {key}={value}\n")
        log.to_csv(f, index=False)
    return log


def read_train_log(path: Union[str, Path]) -> Tuple[Dict[str, str], pd.DataFrame]:
    """
    Read a training log.

    Args:
        path: Path of train_log.csv

    Returns:
        Tuple of (header key/value pairs, per-step log)
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Training log not found: {path}")
    header = {}
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            if not line.startswith("# "):
                break
            key, _, value = line[2:].rstrip("\n").partition("=")
            header[key] = value
    return header, pd.read_csv(path, comment="#")


def train(rc: RunConfig,
          corpus_dir: Union[str, Path],
          run_dir: Union[str, Path],
          utterances: Optional[Sequence[Utterance]] = None,
          progress: bool = True) -> TrainResult:
    """
    Train one run.

    Args:
        rc: Run configuration
        corpus_dir: Corpus directory (its train split is used)
        run_dir: Output directory
        utterances: Preloaded training utterances (loaded from the corpus if omitted)
        progress: Show progress bars

    Returns:
        The training result
    """
    seed_everything(rc.seed)
    run_dir = Path(run_dir)
    ensure_directory_exists(run_dir)
    rc.save(run_dir / "run_config.json")
    checkpoint_dir = run_dir / CHECKPOINT_DIR

    if utterances is None:
        utterances = load_split(corpus_dir, "train", rc.classifier.n_classes)
    examples = prepare_examples(utterances, rc)
    if not examples:
        raise InvalidInputError(f"No training utterances in {corpus_dir}")

    bundle = build_variant(rc)
    if bundle.classifier is not None:
        fit_feature_statistics(bundle, examples)
        steps = rc.pretrain_steps()
        if steps:
            pairs = [(bundle.classifier_features(ex.noisy, ex.clean).float(), ex.labels) for ex in examples]
            pretrain_classifier(bundle.classifier, pairs, steps, rc.lr_classifier, rc.batch_size,
                                rc.seed, progress)

    params: Dict[str, torch.nn.Parameter] = {}
    for group, _ in bundle.param_groups():
        params.update(group)
    state = AdamState(bundle.param_groups())

    columns = ["step", "epoch", "loss_total", "loss_spectral"]
    if bundle.classifier is not None:
        columns.append("loss_phoneme")
    rows: List[Dict[str, float]] = []
    log_path = run_dir / LOG_FILE
    # kept on disk if training aborts before the first periodic save
    checkpoint_hash = save_bundle(bundle, checkpoint_dir, complete=False)

    n_batches = math.ceil(len(examples) / rc.batch_size)
    total_steps = rc.epochs * n_batches if rc.max_steps is None else min(rc.max_steps, rc.epochs * n_batches)
    bar = tqdm(total=total_steps, desc=f"Training {rc.label}", disable=not progress)
    step = 0
    for epoch in range(rc.epochs):
        order = np.random.default_rng(child_seed(rc.seed, "epoch", epoch)).permutation(len(examples))
        for start in range(0, len(examples), rc.batch_size):
            if step >= total_steps:
                break
            batch = [examples[i] for i in order[start:start + rc.batch_size]]
            total, spectral, phoneme = batch_loss(bundle, batch, rc.loss)
            if not torch.isfinite(total):
                _write_log(log_path, rc, rows, columns)
                raise TrainingError(
                    f"Non-finite loss at step {step}; last good checkpoint kept at {checkpoint_dir}"
                )
            adam_step(params, gradients(total, params.items()), state)
            step += 1

            row = {"step": step, "epoch": epoch, "loss_total": total.detach().item(),
                   "loss_spectral": spectral.detach().item()}
            if phoneme is not None:
                row["loss_phoneme"] = phoneme.detach().item()
            rows.append(row)
            bar.update(1)
            bar.set_postfix(loss=f"{row['loss_total']:.4f}")

            if rc.checkpoint_every and step % rc.checkpoint_every == 0:
                checkpoint_hash = save_bundle(bundle, checkpoint_dir, complete=False)
    bar.close()

    checkpoint_hash = save_bundle(bundle, checkpoint_dir)
    log = _write_log(log_path, rc, rows, columns)
    logger.info("Trained %s for %d steps; final loss %.4f", rc.label, step, rows[-1]["loss_total"] if rows else float("nan"))
    return TrainResult(run_dir, checkpoint_dir, checkpoint_hash, log, step)
