"""
Toy Corpus Module

This module synthesizes the pseudo-phoneme corpus used at desk scale and loads
it back. Each pseudo-phoneme class owns a fixed set of formant frequencies;
an utterance is a sequence of 80-300 ms segments, each a sum of its class's
formant sinusoids under a raised-cosine envelope. Frame labels follow the
segments, and every clean utterance is mixed with white or pink noise at a
random SNR.

Corpus layout:
    manifest.csv            one row per noisy mixture
    corpus_config.json      the ToyCorpusConfig used
    clean/ noise/ noisy/    16-bit PCM WAV files
    align/                  one label per line per 10 ms frame
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd
import torch
from sklearn.linear_model import LogisticRegression
from sklearn.pipeline import make_pipeline
from sklearn.preprocessing import StandardScaler
from tqdm import tqdm

from dsp.audio import Waveform, read_wav, write_wav
from dsp.features import MfccConfig, log_mel_tensor
from dsp.mixing import scaled_noise_at_snr
from phoneme.alignment import PhonemeFrameLabels, read_alignment, write_alignment
from pipeline.config import ToyCorpusConfig
from utils.errors import InvalidInputError
from utils.logging_utils import get_logger
from utils.utils import child_seed, ensure_directory_exists, ms_to_samples

logger = get_logger(__name__)

MANIFEST_FILE = "manifest.csv"
MANIFEST_COLUMNS = ["utterance_id", "clean_path", "noise_path", "noisy_path", "alignment_path", "snr_db", "split"]
PEAK_LIMIT = 0.99


@dataclass(frozen=True)
class Utterance:
    """One noisy mixture with its clean reference and frame labels."""

    utterance_id: str
    clean: Waveform
    noisy: Waveform
    labels: PhonemeFrameLabels
    snr_db: float
    split: str


def class_formants(cfg: ToyCorpusConfig) -> List[List[float]]:
    """
    Formant frequencies of every class, distinct across classes.

    Args:
        cfg: Corpus configuration

    Returns:
        One sorted frequency list per class
    """
    rng = np.random.default_rng(child_seed(cfg.seed, "formants"))
    grid = np.array(cfg.formant_grid())
    counts = rng.integers(cfg.formants_min, cfg.formants_max + 1, size=cfg.n_classes)
    picks = rng.choice(len(grid), size=int(counts.sum()), replace=False)
    formants, start = [], 0
    for count in counts:
        formants.append(sorted(float(f) for f in grid[picks[start:start + count]]))
        start += count
    return formants


def _raised_cosine(length: int, ramp: int) -> np.ndarray:
    envelope = np.ones(length)
    ramp = min(ramp, length // 2)
    if ramp > 0:
        rise = 0.5 - 0.5 * np.cos(np.pi * (np.arange(ramp) + 0.5) / ramp)
        envelope[:ramp] = rise
        envelope[length - ramp:] = rise[::-1]
    return envelope


def synth_clean(cfg: ToyCorpusConfig, formants: List[List[float]],
                rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """
    Synthesize one clean pseudo-phoneme utterance.

    Args:
        cfg: Corpus configuration
        formants: Formant frequencies per class
        rng: Generator of this utterance

    Returns:
        Tuple of (samples, class index of every sample)
    """
    sr = cfg.sample_rate
    n_samples = int(round(rng.uniform(cfg.utterance_min_s, cfg.utterance_max_s) * sr))
    ramp = ms_to_samples(cfg.ramp_ms, sr)
    samples = np.zeros(n_samples)
    classes = np.zeros(n_samples, dtype=np.int64)

    pos = 0
    while pos < n_samples:
        length = min(ms_to_samples(rng.uniform(cfg.segment_min_ms, cfg.segment_max_ms), sr), n_samples - pos)
        label = int(rng.integers(cfg.n_classes))
        t = np.arange(length) / sr
        tone = np.zeros(length)
        for i, freq in enumerate(formants[label]):
            tone += np.sin(2 * np.pi * freq * t + rng.uniform(0, 2 * np.pi)) / (i + 1)
        samples[pos:pos + length] = tone * _raised_cosine(length, ramp)
        classes[pos:pos + length] = label
        pos += length

    peak = np.max(np.abs(samples))
    if peak > 0:
        samples *= cfg.peak_amplitude / peak
    return samples, classes


def frame_labels(classes: np.ndarray, hop_length: int) -> np.ndarray:
    """
    Label of every centred frame: the class of sample min(t * hop, N - 1).

    Args:
        classes: Class index per sample
        hop_length: Frame hop in samples

    Returns:
        N // hop + 1 labels
    """
    n = len(classes)
    positions = np.minimum(np.arange(n // hop_length + 1) * hop_length, n - 1)
    return classes[positions]


def synth_noise(cfg: ToyCorpusConfig, length: int, rng: np.random.Generator) -> np.ndarray:
    """
    White or pink Gaussian noise.

    Args:
        cfg: Corpus configuration
        length: Number of samples
        rng: Generator

    Returns:
        Noise samples with unit variance before shaping
    """
    white = rng.standard_normal(length)
    if cfg.noise_type == "white":
        return white
    spectrum = np.fft.rfft(white)
    freqs = np.arange(len(spectrum), dtype=np.float64)
    shaping = np.zeros_like(freqs)
    shaping[1:] = 1.0 / np.sqrt(freqs[1:])
    pink = np.fft.irfft(spectrum * shaping, n=length)
    return pink / np.std(pink)


def synth_toy_corpus(cfg: ToyCorpusConfig, output_dir: Union[str, Path], progress: bool = True) -> pd.DataFrame:
    """
    Write the toy corpus to a directory.

    Args:
        cfg: Corpus configuration
        output_dir: Corpus directory
        progress: Show a progress bar

    Returns:
        The manifest
    """
    out = Path(output_dir)
    for sub in ("clean", "noise", "noisy", "align"):
        ensure_directory_exists(out / sub)
    cfg.save(out / "corpus_config.json")

    formants = class_formants(cfg)
    hop = ms_to_samples(cfg.hop_ms, cfg.sample_rate)
    jobs = [("train", i, cfg.train_mixtures) for i in range(cfg.n_train)]
    jobs += [("test", i, cfg.test_mixtures) for i in range(cfg.n_test)]

    rows: List[Dict[str, object]] = []
    for split, index, mixtures in tqdm(jobs, desc="Synthesizing", disable=not progress):
        rng = np.random.default_rng(child_seed(cfg.seed, split, index))
        clean, classes = synth_clean(cfg, formants, rng)
        labels = frame_labels(classes, hop)
        base = f"{split}_{index:04d}"

        mixes = []
        for m in range(mixtures):
            mix_rng = np.random.default_rng(child_seed(cfg.seed, split, index, "mix", m))
            noise = synth_noise(cfg, int(np.ceil(cfg.noise_length_factor * len(clean))), mix_rng)
            snr = float(mix_rng.uniform(cfg.snr_min_db, cfg.snr_max_db))
            scaled, _ = scaled_noise_at_snr(Waveform(clean, cfg.sample_rate), Waveform(noise, cfg.sample_rate),
                                            snr, mix_rng)
            mixes.append((m, scaled, snr))

        # one gain for the clean signal and all its mixtures keeps every SNR intact
        peak = max(np.max(np.abs(clean + scaled)) for _, scaled, _ in mixes)
        gain = PEAK_LIMIT / peak if peak > PEAK_LIMIT else 1.0
        clean = clean * gain

        clean_path = f"clean/{base}.wav"
        align_path = f"align/{base}.txt"
        write_wav(out / clean_path, Waveform(clean, cfg.sample_rate))
        write_alignment(out / align_path, PhonemeFrameLabels(labels, cfg.n_classes, base))

        for m, scaled, snr in mixes:
            utterance_id = f"{base}_m{m}"
            noise_path = f"noise/{utterance_id}.wav"
            noisy_path = f"noisy/{utterance_id}.wav"
            write_wav(out / noise_path, Waveform(scaled * gain, cfg.sample_rate))
            write_wav(out / noisy_path, Waveform(clean + scaled * gain, cfg.sample_rate))
            rows.append({
                "utterance_id": utterance_id,
                "clean_path": clean_path,
                "noise_path": noise_path,
                "noisy_path": noisy_path,
                "alignment_path": align_path,
                "snr_db": round(snr, 6),
                "split": split,
            })

    manifest = pd.DataFrame(rows, columns=MANIFEST_COLUMNS)
    manifest.to_csv(out / MANIFEST_FILE, index=False)
    logger.info("Wrote %d mixtures to %s", len(manifest), out)
    return manifest


def load_manifest(corpus_dir: Union[str, Path]) -> pd.DataFrame:
    """
    Read a corpus manifest.

    Args:
        corpus_dir: Corpus directory

    Returns:
        The manifest
    """
    path = Path(corpus_dir) / MANIFEST_FILE
    if not path.exists():
        raise FileNotFoundError(f"Corpus manifest not found: {path}")
    manifest = pd.read_csv(path, dtype={"utterance_id": str, "split": str})
    missing = [c for c in MANIFEST_COLUMNS if c not in manifest.columns]
    if missing:
        raise InvalidInputError(f"{path} lacks columns {missing}")
    return manifest


def load_split(corpus_dir: Union[str, Path], split: str, n_classes: int,
               limit: Optional[int] = None) -> List[Utterance]:
    """
    Load the utterances of one split.

    Args:
        corpus_dir: Corpus directory
        split: "train" or "test"
        n_classes: Number of phoneme classes of the labels
        limit: Load at most this many utterances

    Returns:
        Utterances in manifest order
    """
    corpus = Path(corpus_dir)
    manifest = load_manifest(corpus)
    rows = manifest[manifest["split"] == split]
    if limit is not None:
        rows = rows.head(limit)

    utterances = []
    for _, row in rows.iterrows():
        labels = read_alignment(corpus / row["alignment_path"], n_classes, row["utterance_id"])
        utterances.append(Utterance(
            utterance_id=row["utterance_id"],
            clean=read_wav(corpus / row["clean_path"]),
            noisy=read_wav(corpus / row["noisy_path"]),
            labels=labels,
            snr_db=float(row["snr_db"]),
            split=split,
        ))
    return utterances


def clean_log_mel_frames(utterances: List[Utterance], cfg: MfccConfig) -> Tuple[np.ndarray, np.ndarray]:
    """
    Stack clean log-mel frames and labels of distinct clean utterances.

    Args:
        utterances: Loaded utterances (mixtures of one clean signal are used once)
        cfg: Framing and filterbank configuration

    Returns:
        Tuple of (features of shape (frames, n_mels), labels)
    """
    features, labels, seen = [], [], set()
    for utt in utterances:
        key = utt.utterance_id.rsplit("_m", 1)[0]
        if key in seen:
            continue
        seen.add(key)
        log_mel = log_mel_tensor(torch.from_numpy(utt.clean.samples), cfg).numpy()
        utt.labels.check_frames(log_mel.shape[0], what="log-mel")
        features.append(log_mel)
        labels.append(utt.labels.labels)
    return np.concatenate(features), np.concatenate(labels)


def linear_probe_accuracy(train: List[Utterance], test: List[Utterance],
                          cfg: MfccConfig = MfccConfig(), seed: int = 0) -> float:
    """
    Frame accuracy of a linear classifier on clean log-mel features.

    Args:
        train: Utterances used to fit the probe
        test: Utterances used to score it
        cfg: Framing and filterbank configuration
        seed: Solver seed

    Returns:
        Top-1 frame accuracy on the test utterances
    """
    x_train, y_train = clean_log_mel_frames(train, cfg)
    x_test, y_test = clean_log_mel_frames(test, cfg)
    probe = make_pipeline(StandardScaler(), LogisticRegression(max_iter=2000, random_state=seed))
    probe.fit(x_train, y_train)
    return float(probe.score(x_test, y_test))


