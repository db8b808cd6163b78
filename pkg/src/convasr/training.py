"""End-to-end training of the acoustic model on a synthetic toy task.

The toy task generates "audio" from letter-specific frequency
templates: each letter of a small alphabet is a fixed sine frequency,
a sample is a random letter string rendered as concatenated tone
segments with additive noise, and the features are the standard MFCC
pipeline.  Plain SGD on the globally normalized sequence loss learns
both the network and the transition scores; progress is tracked as
letter error rate on a held-out split (Viterbi best path over the
fully connected lattice, collapsed and decoded back to text).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .alphabet import Alphabet, collapse_path, decode_labels, encode_transcription, make_alphabet
from .acoustic import (
    AcousticError,
    ModelParams,
    NetworkSpec,
    init_params,
    network_backward,
    network_forward_cached,
)
from .criterion import TransitionTable, asg_loss, build_full_graph, viterbi
from .features import Waveform, mfcc, normalize
from .metrics import levenshtein


@dataclass
class ToyTaskConfig:
    letters: str = "abcde"
    num_samples: int = 500
    min_word_len: int = 2
    max_word_len: int = 5
    tone_hz: tuple = (300.0, 700.0, 1300.0, 2200.0, 3500.0)
    min_tone_ms: float = 80.0
    max_tone_ms: float = 140.0
    noise_std: float = 0.05
    sample_rate: int = 16000
    seed: int = 0


def make_toy_dataset(cfg: ToyTaskConfig):
    """Returns (alphabet, list of (FeatureSequence, transcription))."""
    if len(cfg.tone_hz) < len(cfg.letters):
        raise ValueError("need one tone frequency per letter")
    alphabet = make_alphabet(cfg.letters)
    rng = np.random.default_rng(cfg.seed)
    rate = cfg.sample_rate
    samples = []
    for _ in range(cfg.num_samples):
        length = int(rng.integers(cfg.min_word_len, cfg.max_word_len + 1))
        # no adjacent repeats: repeated letters are acoustically
        # indistinguishable from a longer tone at toy scale
        word = [int(rng.integers(len(cfg.letters)))]
        while len(word) < length:
            nxt = int(rng.integers(len(cfg.letters)))
            if nxt != word[-1]:
                word.append(nxt)
        chunks = []
        for li in word:
            dur = rng.uniform(cfg.min_tone_ms, cfg.max_tone_ms) / 1000.0
            t = np.arange(int(dur * rate)) / rate
            phase = rng.uniform(0.0, 2 * np.pi)
            chunks.append(0.5 * np.sin(2 * np.pi * cfg.tone_hz[li] * t + phase))
        wave = np.concatenate(chunks)
        wave += cfg.noise_std * rng.standard_normal(len(wave))
        feats = normalize(mfcc(Waveform(wave, rate)))
        samples.append((feats, "".join(cfg.letters[i] for i in word)))
    return alphabet, samples


@dataclass
class TrainConfig:
    epochs: int = 50
    learning_rate: float = 0.02
    clip_norm: float = 1.0  # global L2 clip over all gradients
    holdout_fraction: float = 0.2
    seed: int = 0
    stop_ler: float | None = None  # stop early once held-out LER drops below


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    edit_count: int
    ref_length: int

    @property
    def ler(self) -> float:
        return self.edit_count / self.ref_length if self.ref_length else 0.0


@dataclass
class ToyTrainResult:
    params: ModelParams
    transitions: TransitionTable
    curve: list  # of EpochStats


def _clip_gradients(arrays, clip_norm: float) -> None:
    total = np.sqrt(sum(float(np.sum(a * a)) for a in arrays))
    if clip_norm > 0 and total > clip_norm:
        scale = clip_norm / total
        for a in arrays:
            a *= scale


def greedy_transcribe(emissions, transitions: TransitionTable, alphabet: Alphabet) -> str:
    """Best unconstrained path, collapsed and decoded leniently."""
    scores = emissions.scores if hasattr(emissions, "scores") else emissions
    full = build_full_graph(scores.shape[1], scores.shape[0])
    path, _ = viterbi(full, scores, transitions)
    return decode_labels(collapse_path(path, alphabet), alphabet, strict=False)


def holdout_ler(dataset, spec, params, transitions, alphabet) -> tuple[int, int]:
    edits, ref_len = 0, 0
    for feats, text in dataset:
        out, _ = network_forward_cached(feats.frames, spec, params)
        hyp = greedy_transcribe(out, transitions, alphabet)
        edits += levenshtein(text, hyp)
        ref_len += len(text)
    return edits, ref_len


def train_toy(
    dataset,
    alphabet: Alphabet,
    spec: NetworkSpec,
    cfg: TrainConfig,
) -> ToyTrainResult:
    """SGD on the globally normalized loss over (features, text) pairs.

    The dataset splits deterministically: the trailing
    ``holdout_fraction`` of samples is held out for the LER curve.
    Infeasible samples (network output shorter than the encoded
    transcription) are reported with their index.
    """
    if not dataset:
        raise ValueError("empty dataset")
    if spec.d_out != len(alphabet):
        raise AcousticError(
            f"network emits {spec.d_out} labels but alphabet has {len(alphabet)}"
        )
    encoded = []
    for idx, (feats, text) in enumerate(dataset):
        labels = encode_transcription(text, alphabet)
        t_out = spec.out_frames(feats.num_frames)
        if t_out < len(labels):
            raise ValueError(
                f"sample {idx} is infeasible: {t_out} output frames for "
                f"{len(labels)} labels"
            )
        encoded.append(labels)

    n_hold = max(1, int(round(len(dataset) * cfg.holdout_fraction)))
    n_hold = min(n_hold, len(dataset) - 1) if len(dataset) > 1 else 0
    train_idx = list(range(len(dataset) - n_hold))
    hold = dataset[len(dataset) - n_hold :] if n_hold else dataset

    rng = np.random.default_rng(cfg.seed)
    params = init_params(spec, rng)
    transitions = TransitionTable.zeros(len(alphabet))
    curve: list[EpochStats] = []
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(train_idx) if len(train_idx) > 1 else train_idx
        total_loss = 0.0
        for i in order:
            feats, _ = dataset[i]
            out, cache = network_forward_cached(feats.frames, spec, params)
            result = asg_loss(out, transitions, encoded[i])
            total_loss += result.loss
            grads, _ = network_backward(spec, params, cache, result.d_emissions)
            flat = [g.w for g in grads] + [g.b for g in grads]
            flat += [result.d_transitions, result.d_start]
            _clip_gradients(flat, cfg.clip_norm)
            for lp, g in zip(params.layers, grads):
                lp.w -= cfg.learning_rate * g.w
                lp.b -= cfg.learning_rate * g.b
            transitions.trans -= cfg.learning_rate * result.d_transitions
            transitions.start -= cfg.learning_rate * result.d_start
        edits, ref_len = holdout_ler(hold, spec, params, transitions, alphabet)
        stats = EpochStats(epoch, total_loss / max(1, len(train_idx)), edits, ref_len)
        curve.append(stats)
        if cfg.stop_ler is not None and stats.ler < cfg.stop_ler:
            break
    return ToyTrainResult(params, transitions, curve)


def default_toy_network(d_in: int = 39, num_labels: int = 8) -> NetworkSpec:
    from .acoustic import ConvLayerSpec

    return NetworkSpec(
        [
            ConvLayerSpec(d_in, 40, 7, 3, "hardtanh"),
            ConvLayerSpec(40, num_labels, 1, 1, "none"),
        ]
    )
