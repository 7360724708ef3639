import json
import warnings
from pathlib import Path

import numpy as np
import pandas as pd
import pytest
import torch

from conftest import small_run_config
from dsp.audio import Waveform
from nnkernel.checkpoint import load_checkpoint
from phoneme.alignment import PhonemeFrameLabels
from phoneme.classifier import ClassifierConfig, PhonemeClassifier
import pipeline.trainer as trainer_module
from pipeline.config import RunConfig, ToyCorpusConfig, flatten_config
from pipeline.corpus import Utterance, load_split, synth_toy_corpus
from pipeline.evaluator import REPORT_COLUMNS, evaluate, evaluate_bundle
from pipeline.trainer import (CHECKPOINT_DIR, LOG_FILE, fit_feature_statistics, prepare_examples, pretrain_classifier,
                              read_train_log, train)
from pipeline.variants import build_variant, enhance_waveform, load_bundle, load_stage1, save_bundle
from utils.errors import AlignmentError, CheckpointError, ConfigError, InvalidInputError, TrainingError
from utils.utils import seed_everything


def test_run_config_rules():
    assert small_run_config().label == "baseline"
    assert small_run_config(variant="pbdr", placement=2).label == "pbdr_2"
    assert small_run_config(variant="cascade").pretrain_steps() == 300
    assert small_run_config(variant="cascade", pretrain_classifier_steps=5).pretrain_steps() == 5
    assert small_run_config(pretrain_classifier_steps=5).pretrain_steps() == 0
    with pytest.raises(ConfigError):
        small_run_config(variant="pbdr")
    with pytest.raises(ConfigError):
        small_run_config(placement=1)
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"stft": {"hop_ms": 5.0}})


def test_run_config_json_round_trip(tmp_path):
    rc = small_run_config(variant="concat", placement=1, seed=3)
    rc.save(tmp_path / "rc.json")
    assert RunConfig.from_json(tmp_path / "rc.json") == rc
    assert json.loads((tmp_path / "rc.json").read_text())["loss"]["lambda"] == 1.0


def test_flatten_config():
    assert flatten_config({"a": 1, "b": {"c": 2, "d": {"e": 3}}}) == {"a": 1, "b.c": 2, "b.d.e": 3}


def test_build_variant_wiring():
    pbdr = build_variant(small_run_config(variant="pbdr", placement=2))
    assert pbdr.enhancer.conditioner.mapper.n_bins == 129
    assert pbdr.classifier is not None and pbdr.stage1 is None

    baseline = build_variant(small_run_config())
    assert baseline.classifier is None
    assert not any(name.startswith("classifier.") for name in baseline.state_dict())

    cascade = build_variant(small_run_config(variant="cascade"))
    assert cascade.enhancer.conditioner is None and cascade.classifier is not None

    with pytest.raises(ConfigError):
        build_variant(small_run_config(variant="e_pbdr", placement=2))


def test_identity_pbdr_reproduces_the_baseline(tiny_test):
    baseline = build_variant(small_run_config())
    pbdr = build_variant(small_run_config(variant="pbdr", placement=2))
    pbdr.enhancer.load_state_dict(baseline.enhancer.state_dict(), strict=False)
    noisy = tiny_test[0].noisy
    np.testing.assert_allclose(enhance_waveform(noisy, pbdr).samples, enhance_waveform(noisy, baseline).samples,
                               atol=1e-6)


@pytest.mark.parametrize("variant,placement", [("baseline", None), ("pbdr", 1), ("concat", 2), ("cascade", None)])
def test_enhance_keeps_length_and_silence(variant, placement):
    bundle = build_variant(small_run_config(variant=variant, placement=placement))
    out = enhance_waveform(Waveform(np.random.default_rng(0).standard_normal(3001) * 0.1), bundle)
    assert len(out) == 3001
    silent = enhance_waveform(Waveform(np.zeros(2000)), bundle)
    assert np.sum(np.abs(silent.samples)) <= 1e-3 * len(silent)


def test_enhance_rejects_other_sample_rates():
    bundle = build_variant(small_run_config())
    with pytest.raises(InvalidInputError):
        enhance_waveform(Waveform(np.zeros(2000), sample_rate=8000), bundle)


def test_checkpoint_round_trip_is_bit_exact(tmp_path, tiny_test):
    bundle = build_variant(small_run_config(variant="pbdr", placement=1))
    bundle.classifier.set_feature_statistics(np.full(13, 0.5), np.full(13, 2.0))
    save_bundle(bundle, tmp_path / "ckpt")
    loaded = load_bundle(tmp_path / "ckpt")
    assert loaded.config == bundle.config
    noisy = torch.from_numpy(tiny_test[0].noisy.samples).float()
    with torch.no_grad():
        a = bundle.forward_utterance(noisy)
        b = loaded.forward_utterance(noisy)
    assert torch.equal(a.s_hat, b.s_hat)
    assert torch.equal(a.probs, b.probs)


def test_load_bundle_errors(tmp_path):
    with pytest.raises(CheckpointError):
        load_bundle(tmp_path)
    pbdr = build_variant(small_run_config(variant="pbdr", placement=2))
    save_bundle(pbdr, tmp_path / "pbdr")
    with pytest.raises(CheckpointError):
        load_stage1(build_variant(small_run_config()).enhancer, tmp_path / "pbdr")


def test_prepare_examples_checks_alignment(tiny_train):
    utt = tiny_train[0]
    short = Utterance(utt.utterance_id, utt.clean, utt.noisy,
                      PhonemeFrameLabels(utt.labels.labels[:-1], utt.labels.n_classes), utt.snr_db, utt.split)
    with pytest.raises(AlignmentError):
        prepare_examples([short], small_run_config())
    examples = prepare_examples(tiny_train, small_run_config())
    assert [ex.utterance_id for ex in examples] == [u.utterance_id for u in tiny_train]
    assert examples[0].clean_spec.shape == (len(utt.labels), 257)


def test_training_is_deterministic(tmp_path, tiny_corpus, tiny_train):
    rc = small_run_config(variant="pbdr", placement=2)
    first = train(rc, tiny_corpus, tmp_path / "a", utterances=tiny_train, progress=False)
    second = train(rc, tiny_corpus, tmp_path / "b", progress=False)
    assert first.steps == second.steps == 3
    assert first.checkpoint_hash == second.checkpoint_hash
    pd.testing.assert_frame_equal(first.log, second.log)


def test_training_logs_losses_without_grad_conversion_warnings(tmp_path, tiny_corpus, tiny_train):
    rc = small_run_config(variant="cascade", pretrain_classifier_steps=2)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        result = train(rc, tiny_corpus, tmp_path / "run", utterances=tiny_train, progress=False)
    assert result.steps == 3
    assert not [w for w in caught if "requires_grad" in str(w.message)]


@pytest.mark.parametrize("checkpoint_every,failing_call", [(0, 1), (1, 2)])
def test_non_finite_loss_keeps_a_loadable_checkpoint(tmp_path, tiny_corpus, tiny_train, monkeypatch,
                                                     checkpoint_every, failing_call):
    real_batch_loss = trainer_module.batch_loss
    calls = []

    def batch_loss(bundle, batch, loss_cfg):
        calls.append(1)
        total, spectral, phoneme = real_batch_loss(bundle, batch, loss_cfg)
        if len(calls) == failing_call:
            total = total * float("nan")
        return total, spectral, phoneme

    monkeypatch.setattr(trainer_module, "batch_loss", batch_loss)
    rc = small_run_config(checkpoint_every=checkpoint_every)
    with pytest.raises(TrainingError):
        train(rc, tiny_corpus, tmp_path / "run", utterances=tiny_train, progress=False)

    bundle = load_bundle(tmp_path / "run" / CHECKPOINT_DIR)
    assert bundle.config == rc
    assert load_checkpoint(tmp_path / "run" / CHECKPOINT_DIR)[1]["complete"] is False
    _, log = read_train_log(tmp_path / "run" / LOG_FILE)
    assert len(log) == failing_call - 1


def test_training_log(tmp_path, tiny_corpus, tiny_train):
    result = train(small_run_config(variant="concat", placement=1), tiny_corpus, tmp_path / "concat",
                   utterances=tiny_train, progress=False)
    header, log = read_train_log(tmp_path / "concat" / LOG_FILE)
    assert header["variant"] == "concat"
    assert header["placement"] == "1"
    assert header["loss.lambda"] == "1.0"
    assert list(log.columns) == ["step", "epoch", "loss_total", "loss_spectral", "loss_phoneme"]
    assert list(log["step"]) == [1, 2, 3]
    assert np.all(np.isfinite(log["loss_total"]))
    assert (tmp_path / "concat" / "run_config.json").exists()
    assert result.checkpoint_dir == tmp_path / "concat" / CHECKPOINT_DIR

    train(small_run_config(), tiny_corpus, tmp_path / "baseline", utterances=tiny_train, progress=False)
    _, log = read_train_log(tmp_path / "baseline" / LOG_FILE)
    assert "loss_phoneme" not in log.columns
    np.testing.assert_allclose(log["loss_total"], log["loss_spectral"])

    with pytest.raises(FileNotFoundError):
        read_train_log(tmp_path / "missing.csv")


def test_e_pbdr_keeps_stage1_frozen(tmp_path, tiny_corpus, tiny_train):
    baseline = train(small_run_config(), tiny_corpus, tmp_path / "baseline", utterances=tiny_train, progress=False)
    rc = small_run_config(variant="e_pbdr", placement=2, stage1_checkpoint=str(baseline.checkpoint_dir))
    result = train(rc, tiny_corpus, tmp_path / "e_pbdr", utterances=tiny_train, progress=False)

    base_tensors, _ = load_checkpoint(baseline.checkpoint_dir)
    tensors, _ = load_checkpoint(result.checkpoint_dir)
    stage1 = {k[len("stage1."):]: v for k, v in tensors.items() if k.startswith("stage1.")}
    assert stage1
    for name, value in stage1.items():
        assert torch.equal(value, base_tensors[f"enhancer.{name}"])
    assert load_bundle(result.checkpoint_dir).stage1 is not None


def test_cascade_pretrains_the_classifier(tmp_path, tiny_corpus, tiny_train):
    rc = small_run_config(variant="cascade", pretrain_classifier_steps=2)
    result = train(rc, tiny_corpus, tmp_path / "cascade", utterances=tiny_train, progress=False)
    assert "loss_phoneme" in result.log.columns


def test_evaluate_writes_reports(tmp_path, tiny_corpus, tiny_train, tiny_test):
    result = train(small_run_config(variant="pbdr", placement=2), tiny_corpus, tmp_path / "run",
                   utterances=tiny_train, progress=False)
    report = evaluate(result.checkpoint_dir, tiny_corpus, "test", tmp_path / "eval", progress=False)
    assert list(report.rows.columns) == REPORT_COLUMNS
    assert len(report.rows) == len(tiny_test)
    assert report.metadata["checkpoint_hash"] == result.checkpoint_hash
    assert 0.0 <= report.aggregates["top1"] <= report.aggregates["top3"] <= 1.0
    summary = json.loads((tmp_path / "eval" / "summary.json").read_text())
    assert summary["metadata"]["variant"] == "pbdr"
    assert set(summary["aggregates"]) == set(REPORT_COLUMNS[1:])
    assert (tmp_path / "eval" / "report.csv").exists()

    again = evaluate(result.checkpoint_dir, tiny_corpus, "test", progress=False)
    pd.testing.assert_frame_equal(report.rows, again.rows)


def test_baseline_report_has_no_classifier_metrics(tiny_test):
    report = evaluate_bundle(build_variant(small_run_config()), tiny_test)
    assert report.rows["top1"].isna().all()
    assert np.isnan(report.aggregates["loss_phoneme"])
    assert np.isfinite(report.aggregates["noisy_ssnr_db"])


@pytest.mark.slow
def test_micro_network_overfits_four_utterances(tmp_path):
    corpus_cfg = ToyCorpusConfig(n_classes=3, n_train=4, n_test=0, train_mixtures=1, utterance_min_s=0.02,
                                 utterance_max_s=0.03, segment_min_ms=10.0, segment_max_ms=20.0, ramp_ms=2.0,
                                 hop_ms=0.5, snr_min_db=5.0, snr_max_db=15.0, seed=11)
    synth_toy_corpus(corpus_cfg, tmp_path / "corpus", progress=False)
    rc = RunConfig.from_json(Path(__file__).resolve().parent.parent / "configs" / "micro.json")
    result = train(rc, tmp_path / "corpus", tmp_path / "run", progress=False)
    assert result.steps == 500
    first = result.log["loss_total"].iloc[:4].mean()
    last = result.log["loss_total"].iloc[-4:].mean()
    assert last <= 0.1 * first


@pytest.mark.slow
def test_classifier_beats_chance_on_the_toy_corpus(tmp_path):
    corpus_cfg = ToyCorpusConfig(n_classes=8, n_train=50, n_test=0, train_mixtures=1, seed=5)
    synth_toy_corpus(corpus_cfg, tmp_path / "corpus", progress=False)
    rc = RunConfig(variant="cascade")
    examples = prepare_examples(load_split(tmp_path / "corpus", "train", 8), rc)
    assert len(examples) == 50

    seed_everything(rc.seed)
    bundle = build_variant(rc)
    fit_feature_statistics(bundle, examples)
    pairs = [(bundle.classifier_features(ex.noisy, ex.clean).float(), ex.labels) for ex in examples]
    pretrain_classifier(bundle.classifier, pairs, steps=300, lr=rc.lr_classifier, batch_size=8, seed=rc.seed)

    correct = total = 0
    with torch.no_grad():
        for mfcc, labels in pairs:
            predicted = bundle.classifier(mfcc.unsqueeze(0))[0].argmax(dim=-1)
            correct += int((predicted == labels.long()).sum())
            total += len(labels)
    assert correct / total >= 4 / 8


@pytest.mark.slow
def test_trained_checkpoint_scores_a_lower_training_loss(tmp_path, tiny_corpus, tiny_train):
    rc = small_run_config(variant="pbdr", placement=2, epochs=20, max_steps=40, lr_enhancer=1e-3)
    result = train(rc, tiny_corpus, tmp_path / "run", utterances=tiny_train, progress=False)
    trained = evaluate(result.checkpoint_dir, tiny_corpus, "train", tmp_path / "eval", progress=False)

    seed_everything(rc.seed)
    untrained = build_variant(rc)
    fit_feature_statistics(untrained, prepare_examples(tiny_train, rc))
    baseline = evaluate_bundle(untrained, tiny_train)

    assert len(trained.rows) == len(baseline.rows) == len(tiny_train)
    assert trained.aggregates["loss_total"] < baseline.aggregates["loss_total"]


def _pretrain_features(n_inputs: int, n_classes: int):
    gen = torch.Generator().manual_seed(4)
    features = []
    for _ in range(3):
        labels = torch.randint(0, n_classes, (12,), generator=gen)
        # class-dependent offsets make the frames separable
        mfcc = torch.randn(12, n_inputs, generator=gen) * 0.1 + labels.unsqueeze(-1).float()
        features.append((mfcc, labels))
    return features


def test_pretrain_classifier_reduces_loss():
    cfg = ClassifierConfig(n_inputs=4, bank_size=2, bank_channels=4, projection_channels=4,
                           highway_layers=1, highway_width=8, gru_hidden=4, n_classes=3)
    features = _pretrain_features(cfg.n_inputs, cfg.n_classes)

    torch.manual_seed(0)
    losses = pretrain_classifier(PhonemeClassifier(cfg), features, steps=40, lr=1e-2, batch_size=2, seed=1)
    assert len(losses) == 40
    assert np.mean(losses[-5:]) < np.mean(losses[:5])

    torch.manual_seed(0)
    again = pretrain_classifier(PhonemeClassifier(cfg), features, steps=40, lr=1e-2, batch_size=2, seed=1)
    assert losses == again

    with pytest.raises(InvalidInputError):
        pretrain_classifier(PhonemeClassifier(cfg), [], steps=1, lr=1e-2, batch_size=1)
