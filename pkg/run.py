#!/usr/bin/env python3
"""
Run Script

This script provides the command-line entry points of the PbDr speech
enhancement pipeline: corpus synthesis, training, enhancement, evaluation,
gradient checks and ablations.
"""

import argparse
import os
import sys
from pathlib import Path

# Add the src directory to the path to import modules
sys.path.append(os.path.join(os.path.dirname(os.path.abspath(__file__)), "src"))

from dsp.audio import read_wav, write_wav
from pipeline.ablation import run_ablation
from pipeline.config import RunConfig, ToyCorpusConfig
from pipeline.corpus import synth_toy_corpus
from pipeline.diagnostics import run_gradcheck
from pipeline.evaluator import evaluate
from pipeline.trainer import train
from pipeline.variants import enhance_waveform, load_bundle
from utils.errors import PbdrError
from utils.logging_utils import setup_logging
from utils.utils import get_data_dir


def _run_config(args) -> RunConfig:
    rc = RunConfig.from_json(args.config) if args.config else RunConfig()
    overrides = {}
    for key in ("variant", "placement", "seed", "max_steps", "epochs", "pretrain_classifier_steps"):
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value
    if getattr(args, "stage1", None):
        overrides["stage1_checkpoint"] = args.stage1
    if "variant" in overrides and "placement" not in overrides and overrides["variant"] in ("baseline", "cascade"):
        overrides["placement"] = None
    return rc.updated(**overrides) if overrides else rc


def synth_data(args):
    """Synthesize the toy corpus."""
    cfg = ToyCorpusConfig.from_json(args.config) if args.config else ToyCorpusConfig()
    overrides = {k: v for k, v in (("n_train", args.n_train), ("n_test", args.n_test), ("seed", args.seed),
                                   ("noise_type", args.noise_type)) if v is not None}
    if overrides:
        cfg = cfg.updated(**overrides)
    output = Path(args.output) if args.output else get_data_dir() / "corpus"
    print(f"Synthesizing toy corpus in {output}...")
    manifest = synth_toy_corpus(cfg, output)
    print(f"Wrote {len(manifest)} mixtures")


def run_train(args):
    """Train one run."""
    rc = _run_config(args)
    corpus = Path(args.corpus) if args.corpus else get_data_dir() / "corpus"
    run_dir = Path(args.run_dir) if args.run_dir else get_data_dir() / "runs" / f"{rc.label}_seed{rc.seed}"
    print(f"Training {rc.label} (seed {rc.seed}) into {run_dir}...")
    result = train(rc, corpus, run_dir)
    print(f"Finished after {result.steps} steps; checkpoint {result.checkpoint_dir} ({result.checkpoint_hash[:12]})")


def run_enhance(args):
    """Enhance one WAV file."""
    bundle = load_bundle(args.checkpoint)
    noisy = read_wav(args.input, bundle.config.stft.sample_rate)
    write_wav(args.output, enhance_waveform(noisy, bundle))
    print(f"Wrote {args.output}")


def run_evaluate(args):
    """Evaluate a checkpoint."""
    corpus = Path(args.corpus) if args.corpus else get_data_dir() / "corpus"
    output = Path(args.output) if args.output else Path(args.checkpoint).parent / f"eval_{args.split}"
    report = evaluate(args.checkpoint, corpus, args.split, output, args.limit)
    for key, value in report.aggregates.items():
        print(f"{key:>16}: {value:.4f}")
    print(f"Report written to {output}")


def run_grad_check(args):
    """Run the gradient-check suite."""
    cases = args.cases.split(",") if args.cases else None
    table = run_gradcheck(cases, range(args.seeds), progress=True)
    if args.output:
        table.to_csv(args.output, index=False)
    worst = table.groupby("case")["max_rel_error"].max()
    for case, error in worst.items():
        print(f"{case:>20}: {error:.3e}")
    if not table["passed"].all():
        failed = sorted(set(table.loc[~table["passed"], "case"]))
        raise PbdrError(f"Gradient check failed for {', '.join(failed)}")
    print("All gradient checks passed")


def run_ablate(args):
    """Train and compare several runs."""
    corpus = Path(args.corpus) if args.corpus else get_data_dir() / "corpus"
    output = Path(args.output) if args.output else get_data_dir() / "ablation"
    configs = []
    for path in args.configs:
        base = RunConfig.from_json(path)
        if args.max_steps is not None:
            base = base.updated(max_steps=args.max_steps)
        configs.extend(base.updated(seed=seed) for seed in args.seeds)
    print(f"Running {len(configs)} runs into {output}...")
    table = run_ablation(configs, corpus, output, args.limit)
    print(table.to_string(index=False))


def main():
    """Main function."""
    parser = argparse.ArgumentParser(description="PbDr speech enhancement pipeline.")
    parser.add_argument("--log-level", type=str, default=None, help="Logging level (default: PBDR_LOG_LEVEL)")
    subparsers = parser.add_subparsers(dest="command", help="Command to run")

    synth_parser = subparsers.add_parser("synth-data", help="Synthesize the toy corpus")
    synth_parser.add_argument("--config", type=str, help="Corpus configuration JSON")
    synth_parser.add_argument("--output", type=str, help="Corpus directory")
    synth_parser.add_argument("--n-train", type=int, help="Number of clean training utterances")
    synth_parser.add_argument("--n-test", type=int, help="Number of clean test utterances")
    synth_parser.add_argument("--seed", type=int, help="Corpus seed")
    synth_parser.add_argument("--noise-type", choices=["white", "pink"], help="Noise colour")

    train_parser = subparsers.add_parser("train", help="Train one run")
    train_parser.add_argument("--config", type=str, help="Run configuration JSON")
    train_parser.add_argument("--corpus", type=str, help="Corpus directory")
    train_parser.add_argument("--run-dir", type=str, help="Output directory")
    train_parser.add_argument("--variant", choices=["baseline", "concat", "cascade", "pbdr", "e_pbdr"])
    train_parser.add_argument("--placement", type=int, choices=[1, 2])
    train_parser.add_argument("--seed", type=int)
    train_parser.add_argument("--epochs", type=int)
    train_parser.add_argument("--max-steps", type=int)
    train_parser.add_argument("--pretrain-classifier-steps", type=int)
    train_parser.add_argument("--stage1", type=str, help="Baseline checkpoint used as the e_pbdr stage 1")

    enhance_parser = subparsers.add_parser("enhance", help="Enhance a WAV file")
    enhance_parser.add_argument("--checkpoint", type=str, required=True)
    enhance_parser.add_argument("--input", type=str, required=True)
    enhance_parser.add_argument("--output", type=str, required=True)

    eval_parser = subparsers.add_parser("evaluate", help="Evaluate a checkpoint")
    eval_parser.add_argument("--checkpoint", type=str, required=True)
    eval_parser.add_argument("--corpus", type=str)
    eval_parser.add_argument("--split", choices=["train", "test"], default="test")
    eval_parser.add_argument("--output", type=str)
    eval_parser.add_argument("--limit", type=int)

    grad_parser = subparsers.add_parser("gradcheck", help="Run the gradient-check suite")
    grad_parser.add_argument("--cases", type=str, help="Comma-separated case names (default: all)")
    grad_parser.add_argument("--seeds", type=int, default=5, help="Seeds per case")
    grad_parser.add_argument("--output", type=str, help="CSV report path")

    ablate_parser = subparsers.add_parser("ablate", help="Train and compare variants")
    ablate_parser.add_argument("--configs", type=str, nargs="+", required=True, help="Run configuration JSON files")
    ablate_parser.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ablate_parser.add_argument("--corpus", type=str)
    ablate_parser.add_argument("--output", type=str)
    ablate_parser.add_argument("--max-steps", type=int)
    ablate_parser.add_argument("--limit", type=int)

    args = parser.parse_args()
    setup_logging(args.log_level)

    commands = {
        "synth-data": synth_data,
        "train": run_train,
        "enhance": run_enhance,
        "evaluate": run_evaluate,
        "gradcheck": run_grad_check,
        "ablate": run_ablate,
    }
    if args.command not in commands:
        parser.print_help()
        return 1
    try:
        commands[args.command](args)
    except (PbdrError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
