"""
Ablation Module

This module trains and evaluates a list of runs on one corpus and collects
them in a comparison table (ablation.csv):

    one row per (variant, placement, seed) with aggregate test metrics
    a 'noisy' row scoring the unprocessed input
    a 'median' row per run label over its seeds
    delta_vs_baseline_ssnr_db against the baseline of the same seed (or median)

e_pbdr runs without a stage-1 checkpoint first train (or reuse) the baseline
run of the same seed and use it as the frozen stage 1.
"""

from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from nnkernel.checkpoint import checkpoint_hash, read_manifest
from pipeline.config import RunConfig
from pipeline.corpus import load_split
from pipeline.evaluator import MetricsReport, evaluate_bundle
from pipeline.trainer import CHECKPOINT_DIR, train
from pipeline.variants import load_bundle
from utils.errors import CheckpointError
from utils.logging_utils import get_logger
from utils.utils import ensure_directory_exists

logger = get_logger(__name__)

ABLATION_COLUMNS = [
    "label", "variant", "placement", "seed", "ssnr_db", "snr_db", "top1", "top3",
    "loss_total", "delta_vs_baseline_ssnr_db", "checkpoint_hash",
]
SUMMARY_METRICS = ["ssnr_db", "snr_db", "top1", "top3", "loss_total"]


def run_name(rc: RunConfig) -> str:
    """Directory name of a run, e.g. 'pbdr_2_seed0'."""
    return f"{rc.label}_seed{rc.seed}"


def _reusable(run_dir: Path, rc: RunConfig) -> bool:
    try:
        manifest = read_manifest(run_dir / CHECKPOINT_DIR)
    except CheckpointError:
        return False
    metadata = manifest.get("metadata", {})
    return bool(metadata.get("complete")) and metadata.get("run_config") == rc.to_dict()


def train_or_reuse(rc: RunConfig, corpus_dir: Union[str, Path], output_dir: Union[str, Path],
                   progress: bool = True) -> Path:
    """
    Train a run unless a checkpoint of the same config already exists.

    Args:
        rc: Run configuration
        corpus_dir: Corpus directory
        output_dir: Ablation directory holding one sub-directory per run
        progress: Show progress bars

    Returns:
        The run's checkpoint directory
    """
    run_dir = Path(output_dir) / run_name(rc)
    if _reusable(run_dir, rc):
        logger.info("Reusing %s", run_dir)
    else:
        train(rc, corpus_dir, run_dir, progress=progress)
    return run_dir / CHECKPOINT_DIR


def _with_stage1(rc: RunConfig, corpus_dir: Union[str, Path], output_dir: Union[str, Path],
                 progress: bool) -> RunConfig:
    if rc.variant != "e_pbdr" or rc.stage1_checkpoint:
        return rc
    baseline = rc.updated(variant="baseline", placement=None, stage1_checkpoint=None)
    stage1 = train_or_reuse(baseline, corpus_dir, output_dir, progress)
    return rc.updated(stage1_checkpoint=str(stage1))


def _add_deltas(table: pd.DataFrame) -> pd.DataFrame:
    baseline = table[table["variant"] == "baseline"].set_index("seed")["ssnr_db"]
    deltas = []
    for _, row in table.iterrows():
        if row["variant"] != "noisy" and row["seed"] in baseline.index:
            deltas.append(row["ssnr_db"] - baseline[row["seed"]])
        else:
            deltas.append(np.nan)
    table["delta_vs_baseline_ssnr_db"] = deltas
    return table


def run_ablation(configs: Sequence[RunConfig],
                 corpus_dir: Union[str, Path],
                 output_dir: Union[str, Path],
                 limit: Optional[int] = None,
                 progress: bool = True) -> pd.DataFrame:
    """
    Train, evaluate and compare runs.

    Args:
        configs: Runs to compare (variants, placements and seeds)
        corpus_dir: Shared corpus directory
        output_dir: Output directory (one sub-directory per run plus ablation.csv)
        limit: Evaluate at most this many test utterances
        progress: Show progress bars

    Returns:
        The comparison table
    """
    out = Path(output_dir)
    ensure_directory_exists(out)
    rows: List[Dict[str, object]] = []
    noisy_report: Optional[MetricsReport] = None
    test_cache: Dict[int, list] = {}

    for rc in configs:
        rc = _with_stage1(rc, corpus_dir, out, progress)
        checkpoint_dir = train_or_reuse(rc, corpus_dir, out, progress)
        bundle = load_bundle(checkpoint_dir)
        n_classes = rc.classifier.n_classes
        if n_classes not in test_cache:
            test_cache[n_classes] = load_split(corpus_dir, "test", n_classes, limit)
        digest = checkpoint_hash(checkpoint_dir)
        report = evaluate_bundle(bundle, test_cache[n_classes], metadata={"checkpoint_hash": digest, "split": "test"})
        report.save(out / run_name(rc) / "eval")
        noisy_report = noisy_report or report

        row: Dict[str, object] = {"label": rc.label, "variant": rc.variant, "placement": rc.placement,
                                  "seed": rc.seed, "checkpoint_hash": digest}
        row.update({k: report.aggregates[k] for k in SUMMARY_METRICS})
        rows.append(row)

    table = _add_deltas(pd.DataFrame(rows, columns=ABLATION_COLUMNS))

    medians = []
    for label, group in table.groupby("label", sort=False):
        row = {"label": label, "variant": group["variant"].iloc[0], "placement": group["placement"].iloc[0],
               "seed": "median", "checkpoint_hash": ""}
        row.update({k: group[k].median() for k in SUMMARY_METRICS})
        medians.append(row)
    medians = pd.DataFrame(medians, columns=ABLATION_COLUMNS)
    baseline_median = medians.loc[medians["variant"] == "baseline", "ssnr_db"]
    if len(baseline_median):
        medians["delta_vs_baseline_ssnr_db"] = medians["ssnr_db"] - float(baseline_median.iloc[0])

    extra = [medians]
    if noisy_report is not None:
        noisy = noisy_report.aggregates
        extra.append(pd.DataFrame([{
            "label": "noisy", "variant": "noisy", "placement": None, "seed": "-",
            "ssnr_db": noisy["noisy_ssnr_db"], "snr_db": noisy["noisy_snr_db"],
            "delta_vs_baseline_ssnr_db": (noisy["noisy_ssnr_db"] - float(baseline_median.iloc[0])
                                          if len(baseline_median) else np.nan),
            "checkpoint_hash": "",
        }], columns=ABLATION_COLUMNS))

    table = pd.concat([table] + extra, ignore_index=True)
    table.to_csv(out / "ablation.csv", index=False)
    logger.info("Wrote ablation table with %d rows to %s", len(table), out / "ablation.csv")
    return table
