import numpy as np
import pandas as pd
import pytest

from conftest import TINY_CORPUS
from dsp.audio import Waveform
from dsp.stft import StftConfig
from evaluation.metrics import snr_db
from pipeline.config import ToyCorpusConfig
from pipeline.corpus import (MANIFEST_COLUMNS, class_formants, frame_labels, linear_probe_accuracy,
                             load_manifest, load_split, synth_noise, synth_toy_corpus)
from utils.errors import ConfigError, InvalidInputError


def test_manifest_layout(tiny_corpus):
    manifest = load_manifest(tiny_corpus)
    assert list(manifest.columns) == MANIFEST_COLUMNS
    assert (manifest["split"] == "train").sum() == TINY_CORPUS.n_train * TINY_CORPUS.train_mixtures
    assert (manifest["split"] == "test").sum() == TINY_CORPUS.n_test * TINY_CORPUS.test_mixtures
    assert manifest["utterance_id"].is_unique
    assert manifest["snr_db"].between(TINY_CORPUS.snr_min_db, TINY_CORPUS.snr_max_db).all()
    assert (tiny_corpus / "corpus_config.json").exists()


def test_synthesis_is_deterministic(tmp_path, tiny_corpus):
    synth_toy_corpus(TINY_CORPUS, tmp_path, progress=False)
    pd.testing.assert_frame_equal(load_manifest(tmp_path), load_manifest(tiny_corpus))
    for path in load_manifest(tmp_path)["noisy_path"]:
        assert (tmp_path / path).read_bytes() == (tiny_corpus / path).read_bytes()


def test_labels_cover_every_frame(tiny_train, tiny_test):
    stft_cfg = StftConfig()
    for utt in tiny_train + tiny_test:
        assert len(utt.labels) == stft_cfg.num_frames(len(utt.clean))
        assert utt.labels.labels.min() >= 0
        assert utt.labels.labels.max() < TINY_CORPUS.n_classes
        assert len(utt.noisy) == len(utt.clean)


def test_mixture_snr_matches_manifest(tiny_train, tiny_test):
    for utt in tiny_train + tiny_test:
        noise = Waveform(utt.noisy.samples - utt.clean.samples)
        assert snr_db(utt.clean, noise, is_noise=True) == pytest.approx(utt.snr_db, abs=0.1)


def test_mixtures_share_their_clean_signal(tiny_train):
    by_clean = {}
    for utt in tiny_train:
        by_clean.setdefault(utt.utterance_id.rsplit("_m", 1)[0], []).append(utt)
    assert all(len(group) == TINY_CORPUS.train_mixtures for group in by_clean.values())
    for group in by_clean.values():
        np.testing.assert_array_equal(group[0].clean.samples, group[1].clean.samples)
        assert not np.array_equal(group[0].noisy.samples, group[1].noisy.samples)


def test_frame_labels_take_the_sample_under_each_frame_centre():
    classes = np.array([0, 0, 1, 1, 1, 2])
    np.testing.assert_array_equal(frame_labels(classes, 2), [0, 1, 1, 2])
    np.testing.assert_array_equal(frame_labels(classes, 4), [0, 1])


def test_class_formants_are_distinct():
    formants = class_formants(TINY_CORPUS)
    assert len(formants) == TINY_CORPUS.n_classes
    flat = [f for fs in formants for f in fs]
    assert len(flat) == len(set(flat))
    assert all(TINY_CORPUS.formants_min <= len(fs) <= TINY_CORPUS.formants_max for fs in formants)


def test_pink_noise_tilts_towards_low_frequencies():
    cfg = TINY_CORPUS.updated(noise_type="pink")
    noise = synth_noise(cfg, 16000, np.random.default_rng(0))
    assert np.std(noise) == pytest.approx(1.0)
    power = np.abs(np.fft.rfft(noise)) ** 2
    assert power[10:500].mean() > 10 * power[4000:8000].mean()


def test_corpus_config_validation():
    with pytest.raises(ConfigError):
        ToyCorpusConfig(snr_min_db=10.0, snr_max_db=0.0)
    with pytest.raises(ConfigError):
        ToyCorpusConfig(n_classes=40)
    with pytest.raises(ConfigError):
        ToyCorpusConfig(formant_fmax=9000.0)


def test_manifest_errors(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_manifest(tmp_path)
    pd.DataFrame({"utterance_id": ["a"], "split": ["train"]}).to_csv(tmp_path / "manifest.csv", index=False)
    with pytest.raises(InvalidInputError):
        load_split(tmp_path, "train", 8)


@pytest.mark.slow
def test_clean_classes_are_linearly_separable(tmp_path):
    cfg = TINY_CORPUS.updated(n_train=40, n_test=10, train_mixtures=1)
    synth_toy_corpus(cfg, tmp_path, progress=False)
    train = load_split(tmp_path, "train", cfg.n_classes)
    test = load_split(tmp_path, "test", cfg.n_classes)
    assert linear_probe_accuracy(train, test) > 0.9
