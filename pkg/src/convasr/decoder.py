"""One-pass beam-search decoder over the lexicon trie.

Hypotheses walk the trie frame by frame: stay on the current grapheme,
advance to a child, or (between words, at the trie root) emit silence.
Arriving at a node that ends a word spawns a committed copy back at the
root, swapping the provisional smeared language-model estimate for the
true n-gram score and paying the word insertion bonus/penalty.  Scores
combine the lattice acoustic score (emissions plus transitions, across
word boundaries too), the weighted language model, and a per-word term:

    total = acoustic + alpha * ln P_lm(words) + beta * |words|

Each frame the frontier is merged on (trie node, LM state, last label)
and pruned by beam threshold (drop anything below frame best minus the
threshold) and beam size (stable top-k count cap over in-word
hypotheses; word-boundary hypotheses survive the cap since they are the
decodable outputs and their count is bounded).  In "max" mode merging
keeps the best hypothesis, which makes an exhaustive beam an exact
maximizer; "logadd" mode combines the acoustic mass of merged
hypotheses, a lower bound on the all-paths objective unless the beam
holds every hypothesis.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .criterion import (
    InfeasibleError,
    TransitionTable,
    build_linear_graph,
    forward_score,
)
from .lm import EOS, LN10, LexiconTrie, NGramLM, score_word, sentence_logprob


class DecodeError(RuntimeError):
    """Raised when decoding cannot produce any complete hypothesis."""


@dataclass
class DecoderConfig:
    alpha: float = 1.0  # language model weight
    beta: float = 0.0  # word insertion score (negative penalizes)
    beam_size: int = 100
    beam_threshold: float = math.inf  # max gap to the frame-best hypothesis
    mode: str = "max"  # "max" or "logadd" path accumulation
    silence: str = "optional"  # between words: "none", "optional", "mandatory"

    def __post_init__(self):
        if self.beam_size < 1:
            raise ValueError("beam_size must be >= 1")
        if not self.beam_threshold > 0:
            raise ValueError("beam_threshold must be > 0")
        if self.mode not in ("max", "logadd"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.silence not in ("none", "optional", "mandatory"):
            raise ValueError(f"unknown silence policy {self.silence!r}")


@dataclass
class Hypothesis:
    node: object  # current trie node (root when between words)
    lm_state: tuple
    last_label: int
    acoustic: float
    lm10: float  # committed n-gram mass, log10
    smear10: float  # provisional smeared estimate of the partial word, log10
    words: tuple  # committed word ids

    def total(self, cfg: DecoderConfig) -> float:
        return (
            self.acoustic
            + cfg.alpha * LN10 * (self.lm10 + self.smear10)
            + cfg.beta * len(self.words)
        )


@dataclass
class DecodeResult:
    words: list  # word strings
    score: float  # total per the decomposition below
    acoustic: float
    lm: float  # natural-log language model score (with sentence sentinels)

    @property
    def num_words(self) -> int:
        return len(self.words)


def prune(frontier, cfg: DecoderConfig, scores=None):
    """Beam thresholding then histogram-style count capping.

    Drops hypotheses below (frame best - beam_threshold), then keeps the
    top ``beam_size`` by score; ties resolve in stable input order.
    """
    if not frontier:
        return []
    if scores is None:
        scores = [h.total(cfg) for h in frontier]
    best = max(scores)
    cut = best - cfg.beam_threshold
    kept = [i for i, s in enumerate(scores) if s >= cut]
    if len(kept) > cfg.beam_size:
        kept.sort(key=lambda i: (-scores[i], i))
        kept = sorted(kept[: cfg.beam_size])
    return [frontier[i] for i in kept]


def _prune_frontier(frontier, cfg: DecoderConfig, root):
    """Frame pruning inside the search.

    The count cap applies to in-word hypotheses only: word-boundary
    hypotheses (at the trie root) are the decodable outputs, their count
    is bounded by LM states x labels, and discarding one can make a
    wider beam fail where a narrower one succeeded.  The score threshold
    still applies to everything.
    """
    if not frontier:
        return []
    scores = [h.total(cfg) for h in frontier]
    best = max(scores)
    cut = best - cfg.beam_threshold
    kept = [i for i, s in enumerate(scores) if s >= cut]
    in_word = [i for i in kept if frontier[i].node is not root]
    if len(in_word) > cfg.beam_size:
        in_word.sort(key=lambda i: (-scores[i], i))
        dropped = set(in_word[cfg.beam_size :])
        kept = [i for i in kept if i not in dropped]
    return [frontier[i] for i in kept]


def _commit_words(hyp: Hypothesis, lexicon: LexiconTrie, lm: NGramLM, out: list) -> None:
    for wid in hyp.node.word_ids:
        s, new_state = score_word(lm, hyp.lm_state, lexicon.words[wid])
        out.append(
            Hypothesis(
                node=lexicon.root,
                lm_state=new_state,
                last_label=hyp.last_label,
                acoustic=hyp.acoustic,
                lm10=hyp.lm10 + s,
                smear10=0.0,
                words=hyp.words + (wid,),
            )
        )


def _merge(frontier, cfg: DecoderConfig):
    merged: dict = {}
    for hyp in frontier:
        key = (id(hyp.node), hyp.lm_state, hyp.last_label)
        old = merged.get(key)
        if old is None:
            merged[key] = hyp
        elif cfg.mode == "max":
            if hyp.total(cfg) > old.total(cfg):
                merged[key] = hyp
        else:
            keep, other = (hyp, old) if hyp.total(cfg) > old.total(cfg) else (old, hyp)
            merged[key] = Hypothesis(
                node=keep.node,
                lm_state=keep.lm_state,
                last_label=keep.last_label,
                acoustic=float(np.logaddexp(keep.acoustic, other.acoustic)),
                lm10=keep.lm10,
                smear10=keep.smear10,
                words=keep.words,
            )
    return list(merged.values())


def decode(
    emissions,
    transitions: TransitionTable,
    lm: NGramLM,
    lexicon: LexiconTrie,
    cfg: DecoderConfig,
    nbest: int = 10,
) -> list:
    """Beam search for the best word sequences given emission scores.

    Returns up to ``nbest`` results sorted by descending total score.
    Raises DecodeError when no complete hypothesis survives (beam or
    threshold too tight, or the utterance cannot fit any word).
    """
    f = emissions.scores if hasattr(emissions, "scores") else np.asarray(emissions, float)
    if f.ndim != 2 or f.shape[0] < 1:
        raise DecodeError("empty emission table")
    if lexicon.num_words == 0:
        raise DecodeError("empty lexicon")
    sil = lexicon.alphabet.silence_id
    if f.shape[1] != len(lexicon.alphabet):
        raise DecodeError(
            f"emissions cover {f.shape[1]} labels but the lexicon alphabet "
            f"has {len(lexicon.alphabet)}"
        )
    if transitions.num_labels != f.shape[1]:
        raise DecodeError("transition table does not match the emission labels")
    trans, start = transitions.trans, transitions.start
    root = lexicon.root
    state0 = lm.start_state()

    frontier: list[Hypothesis] = []
    if cfg.silence != "none":
        frontier.append(Hypothesis(root, state0, sil, start[sil] + f[0, sil], 0.0, 0.0, ()))
    for gid, child in sorted(root.children.items()):
        hyp = Hypothesis(
            child, state0, gid, start[gid] + f[0, gid], 0.0, child.smeared, ()
        )
        frontier.append(hyp)
        _commit_words(hyp, lexicon, lm, frontier)
    frontier = _prune_frontier(_merge(frontier, cfg), cfg, root)

    for t in range(1, f.shape[0]):
        new: list[Hypothesis] = []
        for hyp in frontier:
            last = hyp.last_label
            # stay on the current grapheme
            new.append(
                Hypothesis(
                    hyp.node,
                    hyp.lm_state,
                    last,
                    hyp.acoustic + trans[last, last] + f[t, last],
                    hyp.lm10,
                    hyp.smear10,
                    hyp.words,
                )
            )
            at_root = hyp.node is root
            # silence between words
            if at_root and cfg.silence != "none" and last != sil:
                new.append(
                    Hypothesis(
                        root,
                        hyp.lm_state,
                        sil,
                        hyp.acoustic + trans[last, sil] + f[t, sil],
                        hyp.lm10,
                        0.0,
                        hyp.words,
                    )
                )
            # advance deeper into the trie (or into a new word from the root)
            if at_root and cfg.silence == "mandatory" and last != sil:
                continue
            for gid, child in sorted(hyp.node.children.items()):
                if gid == last:
                    # indistinguishable from staying: identical letters
                    # need silence (or another word) in between
                    continue
                adv = Hypothesis(
                    child,
                    hyp.lm_state,
                    gid,
                    hyp.acoustic + trans[last, gid] + f[t, gid],
                    hyp.lm10,
                    child.smeared,
                    hyp.words,
                )
                new.append(adv)
                _commit_words(adv, lexicon, lm, new)
        frontier = _prune_frontier(_merge(new, cfg), cfg, root)

    complete: dict[tuple, DecodeResult] = {}
    for hyp in frontier:
        if hyp.node is not root:
            continue
        lm10 = hyp.lm10
        if EOS in lm.vocab:
            s, _ = score_word(lm, hyp.lm_state, EOS)
            lm10 += s
        total = hyp.acoustic + cfg.alpha * LN10 * lm10 + cfg.beta * len(hyp.words)
        old = complete.get(hyp.words)
        if old is None:
            complete[hyp.words] = DecodeResult(
                [lexicon.words[w] for w in hyp.words], total, hyp.acoustic, LN10 * lm10
            )
        elif cfg.mode == "max":
            if total > old.score:
                complete[hyp.words] = DecodeResult(old.words, total, hyp.acoustic, old.lm)
        else:
            acoustic = float(np.logaddexp(old.acoustic, hyp.acoustic))
            score = acoustic + cfg.alpha * old.lm + cfg.beta * len(old.words)
            complete[hyp.words] = DecodeResult(old.words, score, acoustic, old.lm)
    if not complete:
        raise DecodeError(
            "no complete hypothesis survived decoding "
            "(beam too narrow, threshold too tight, or utterance too short)"
        )
    results = sorted(complete.values(), key=lambda r: -r.score)
    return results[:nbest]


def _spelling_units(seq_spellings, sil: int, policy: str):
    """Chain units for a word sequence: (labels, optional flags).

    Silence units sit at the ends and between words; an inter-word
    silence is mandatory when the juncture letters are identical (the
    lattice cannot represent a direct repeat) or when the policy says
    so.  Returns None when the sequence is unrepresentable.
    """
    labels: list[int] = []
    optional: list[bool] = []
    if policy != "none":
        labels.append(sil)
        optional.append(True)
    for k, spelling in enumerate(seq_spellings):
        if k > 0:
            same = seq_spellings[k - 1][-1] == spelling[0]
            if policy == "none":
                if same:
                    return None
            else:
                labels.append(sil)
                optional.append(not (same or policy == "mandatory"))
        labels.extend(spelling)
        optional.extend([False] * len(spelling))
    if policy != "none":
        labels.append(sil)
        optional.append(True)
    if not labels:
        return None
    return labels, optional


def exhaustive_decode(
    emissions,
    transitions: TransitionTable,
    lm: NGramLM,
    lexicon: LexiconTrie,
    cfg: DecoderConfig,
    max_words: int,
) -> DecodeResult:
    """Score every word sequence up to ``max_words`` and return the best.

    Test oracle: each sequence is scored by running the Forward (or
    Viterbi, per cfg.mode) algorithm on its concatenated spelling chain,
    plus the weighted language model and per-word terms.  Refuses
    instances beyond vocabulary 5 / 8 frames / 5 words.
    """
    f = emissions.scores if hasattr(emissions, "scores") else np.asarray(emissions, float)
    if f.ndim != 2 or f.shape[0] < 1:
        raise DecodeError("empty emission table")
    if lexicon.num_words == 0:
        raise DecodeError("empty lexicon")
    if lexicon.num_words > 5 or f.shape[0] > 8 or max_words > 5:
        raise ValueError(
            "exhaustive decoding is a tiny-instance oracle "
            "(vocabulary <= 5, frames <= 8, max_words <= 5)"
        )
    sil = lexicon.alphabet.silence_id
    best: DecodeResult | None = None
    for k in range(0, max_words + 1):
        for seq in itertools.product(range(lexicon.num_words), repeat=k):
            units = _spelling_units([lexicon.spellings[w] for w in seq], sil, cfg.silence)
            if units is None:
                continue
            try:
                graph = build_linear_graph(units[0], units[1], f.shape[0])
            except InfeasibleError:
                continue
            acoustic, _ = forward_score(graph, f, transitions, cfg.mode)
            lm10 = sentence_logprob(lm, [lexicon.words[w] for w in seq])
            total = acoustic + cfg.alpha * LN10 * lm10 + cfg.beta * k
            if best is None or total > best.score:
                best = DecodeResult(
                    [lexicon.words[w] for w in seq], total, acoustic, LN10 * lm10
                )
    if best is None:
        raise DecodeError("no word sequence is feasible for this utterance")
    return best
