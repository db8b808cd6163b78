"""Lattice sequence criteria: graph construction, Forward/Viterbi, losses.

Three lattices over T frames share one machinery:

* the blank-interleaved lattice used by the per-frame-normalized
  criterion (blanks optional, mandatory between identical neighbors);
* the plain transcription lattice (each label a state, stay-or-advance
  moves, no blanks) used by the globally normalized criterion;
* the fully connected lattice over all labels, used as the global
  normalizer.

Scores accumulate as emission f[t, label] plus transition
trans[prev_label, label] per step (a per-label start score replaces the
transition at the first frame).  Losses return exact gradients computed
from forward-backward posterior marginals.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

NEG_INF = -np.inf


class CriterionError(ValueError):
    """Raised for inconsistent shapes or invalid criterion inputs."""


class InfeasibleError(CriterionError):
    """Raised when a transcription cannot fit in the given frame count."""


def logadd(values) -> float:
    """Numerically stable log(sum(exp(values))); empty input gives -inf."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        return NEG_INF
    m = np.max(values)
    if not np.isfinite(m):
        return float(m)
    return float(m + np.log(np.sum(np.exp(values - m))))


def log_softmax(scores: np.ndarray) -> np.ndarray:
    """Row-wise log-softmax (rows then logadd to 0)."""
    scores = np.asarray(scores, dtype=np.float64)
    m = scores.max(axis=-1, keepdims=True)
    shifted = scores - m
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


@dataclass
class EmissionTable:
    """Per-frame label scores f[t, i] in the log domain."""

    scores: np.ndarray  # (T, L)
    normalized: bool = False  # True when each row logadds to 0

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        if self.scores.ndim != 2:
            raise CriterionError("emission scores must be a (T, L) matrix")
        if not np.all(np.isfinite(self.scores)):
            raise CriterionError("emission scores must be finite")
        if self.normalized:
            m = self.scores.max(axis=1, keepdims=True)
            rows = m[:, 0] + np.log(np.exp(self.scores - m).sum(axis=1))
            if np.max(np.abs(rows)) > 1e-5:
                raise CriterionError("rows marked normalized do not logadd to 0")

    @classmethod
    def from_logits(cls, scores, normalize: bool = False) -> "EmissionTable":
        scores = np.asarray(scores, dtype=np.float64)
        if normalize:
            return cls(log_softmax(scores), normalized=True)
        return cls(scores, normalized=False)

    @property
    def num_frames(self) -> int:
        return self.scores.shape[0]

    @property
    def num_labels(self) -> int:
        return self.scores.shape[1]


@dataclass
class TransitionTable:
    """Transition scores: trans[i, j] moves from label i to j between
    consecutive frames; start[j] replaces the transition at frame 1.
    Un-normalized by design."""

    trans: np.ndarray  # (L, L)
    start: np.ndarray  # (L,)

    def __post_init__(self):
        self.trans = np.asarray(self.trans, dtype=np.float64)
        self.start = np.asarray(self.start, dtype=np.float64)
        if self.trans.ndim != 2 or self.trans.shape[0] != self.trans.shape[1]:
            raise CriterionError("transition matrix must be square")
        if self.start.shape != (self.trans.shape[0],):
            raise CriterionError("start scores must have one entry per label")
        if not (np.all(np.isfinite(self.trans)) and np.all(np.isfinite(self.start))):
            raise CriterionError("transition scores must be finite")

    @classmethod
    def zeros(cls, num_labels: int) -> "TransitionTable":
        return cls(np.zeros((num_labels, num_labels)), np.zeros(num_labels))

    @property
    def num_labels(self) -> int:
        return self.start.shape[0]


@dataclass
class CriterionResult:
    loss: float
    d_emissions: np.ndarray  # (T, L)
    d_transitions: np.ndarray  # (L, L)
    d_start: np.ndarray  # (L,)


@dataclass
class UnfoldedGraph:
    """Frame-indexed lattice of states with predecessor links.

    States at frame t are stored as parallel arrays: ``frame_labels[t]``
    holds their label ids and ``frame_preds[t]`` an (n_states, k) matrix
    of indices into frame t-1's states, padded with -1.
    ``frame_succs[t]`` mirrors this toward frame t+1.  ``accepting``
    indexes the final frame's states.
    """

    num_frames: int
    frame_labels: list  # [t] -> int array (n_t,)
    frame_preds: list  # [t] -> int array (n_t, k) or None at t=0
    frame_succs: list  # [t] -> int array (n_t, k) or None at t=T-1
    accepting: np.ndarray

    def max_label(self) -> int:
        return max(int(lab.max()) for lab in self.frame_labels)


def _pad_ragged(rows: list[list[int]]) -> np.ndarray:
    width = max((len(r) for r in rows), default=0)
    out = np.full((len(rows), max(width, 1)), -1, dtype=np.int64)
    for i, r in enumerate(rows):
        out[i, : len(r)] = r
    return out


def build_linear_graph(unit_labels, optional, num_frames: int) -> UnfoldedGraph:
    """Unfold a left-to-right chain of states over ``num_frames``.

    Each unit occupies one or more consecutive frames; units flagged
    optional may be skipped entirely.  Moves go from a unit to itself or
    to the next unit, hopping over any run of skipped optional units.
    This one chain shape covers the blank-interleaved lattice, the plain
    transcription lattice, and the decoder's optional-silence spelling
    lattices.
    """
    unit_labels = [int(u) for u in unit_labels]
    optional = [bool(o) for o in optional]
    n_units = len(unit_labels)
    if n_units == 0:
        raise InfeasibleError("cannot unfold an empty chain")
    if len(optional) != n_units:
        raise CriterionError("unit/optional flag lengths differ")

    mandatory = [not o for o in optional]
    # min frames to reach unit u / to finish from unit u (inclusive)
    before = np.concatenate([[0], np.cumsum(mandatory)])
    d_f = before[:-1] + 1
    total_mandatory = int(before[-1])
    d_b = (total_mandatory - before[1:]) + 1
    min_frames = max(total_mandatory, 1)
    if num_frames < min_frames:
        raise InfeasibleError(
            f"chain needs at least {min_frames} frames, got {num_frames}"
        )

    unit_preds: list[list[int]] = []
    for u in range(n_units):
        preds = [u]
        v = u - 1
        while v >= 0:
            preds.append(v)
            if mandatory[v]:
                break
            v -= 1
        unit_preds.append(sorted(preds))
    unit_succs: list[list[int]] = [[] for _ in range(n_units)]
    for u, preds in enumerate(unit_preds):
        for p in preds:
            unit_succs[p].append(u)
    master_preds = _pad_ragged(unit_preds)  # (U, K) global unit indices
    master_succs = _pad_ragged(unit_succs)

    # present units at frame t (1-indexed): d_f[u] <= t <= T - d_b[u] + 1;
    # both bounds are monotone in u, so the present set is a range.
    latest = num_frames - d_b + 1  # non-decreasing in u
    t_arr = np.arange(1, num_frames + 1)
    los = np.searchsorted(latest, t_arr, side="left")
    his = np.searchsorted(d_f, t_arr, side="right") - 1
    if np.any(los > his):
        raise InfeasibleError("no reachable states at some frame")  # pragma: no cover

    all_labels = np.asarray(unit_labels, dtype=np.int64)

    def localize(master, lo, hi, other_lo, other_hi, cache):
        # slice the master link matrix to the frame's band and rebase the
        # target indices onto the other frame's band; identical bands
        # reuse one array so downstream gathers can cache on identity
        key = (lo, hi, other_lo, other_hi)
        hit = cache.get(key)
        if hit is None:
            sub = master[lo : hi + 1]
            hit = np.where((sub < other_lo) | (sub > other_hi), -1, sub - other_lo)
            cache[key] = hit
        return hit

    label_cache: dict = {}
    pred_cache: dict = {}
    succ_cache: dict = {}
    frame_labels, frame_preds, frame_succs = [], [], []
    for t in range(num_frames):
        lo, hi = int(los[t]), int(his[t])
        lab = label_cache.get((lo, hi))
        if lab is None:
            lab = all_labels[lo : hi + 1]
            label_cache[(lo, hi)] = lab
        frame_labels.append(lab)
        if t == 0:
            frame_preds.append(None)
        else:
            frame_preds.append(
                localize(master_preds, lo, hi, int(los[t - 1]), int(his[t - 1]), pred_cache)
            )
        if t == num_frames - 1:
            frame_succs.append(None)
        else:
            frame_succs.append(
                localize(master_succs, lo, hi, int(los[t + 1]), int(his[t + 1]), succ_cache)
            )

    # accepting: last mandatory unit and every optional unit after it
    accept_units = []
    for u in range(n_units - 1, -1, -1):
        accept_units.append(u)
        if mandatory[u]:
            break
    last_lo, last_hi = int(los[-1]), int(his[-1])
    accepting = np.asarray(
        sorted(u - last_lo for u in accept_units if last_lo <= u <= last_hi),
        dtype=np.int64,
    )
    return UnfoldedGraph(num_frames, frame_labels, frame_preds, frame_succs, accepting)


def build_ctc_graph(labels, num_frames: int, blank_id: int) -> UnfoldedGraph:
    """Blank-interleaved lattice: blanks optional between letters and at
    the ends, mandatory between identical consecutive labels."""
    labels = [int(x) for x in labels]
    if any(x == blank_id for x in labels):
        raise CriterionError("transcription must not contain the blank label")
    units: list[int] = [blank_id]
    optional: list[bool] = [True]
    for i, lab in enumerate(labels):
        units.append(lab)
        optional.append(False)
        units.append(blank_id)
        # mandatory separator between identical neighbors
        optional.append(not (i + 1 < len(labels) and labels[i + 1] == lab))
    try:
        return build_linear_graph(units, optional, num_frames)
    except InfeasibleError:
        need = len(labels) + sum(
            1 for i in range(len(labels) - 1) if labels[i] == labels[i + 1]
        )
        raise InfeasibleError(
            f"transcription of {len(labels)} labels needs at least {need} "
            f"frames with mandatory blanks, got {num_frames}"
        ) from None


def build_asg_graph(labels, num_frames: int) -> UnfoldedGraph:
    """Plain transcription lattice: one state per label, stay or advance."""
    labels = [int(x) for x in labels]
    if not labels:
        raise InfeasibleError("empty transcription")
    if num_frames < len(labels):
        raise InfeasibleError(
            f"transcription of {len(labels)} labels does not fit in "
            f"{num_frames} frames"
        )
    return build_linear_graph(labels, [False] * len(labels), num_frames)


def build_full_graph(num_labels: int, num_frames: int) -> UnfoldedGraph:
    """Fully connected lattice accepting every frame labeling."""
    if num_labels < 1 or num_frames < 1:
        raise CriterionError("need at least one label and one frame")
    lab = np.arange(num_labels, dtype=np.int64)
    dense = np.tile(lab, (num_labels, 1))
    frame_labels = [lab] * num_frames
    frame_preds = [None] + [dense] * (num_frames - 1)
    frame_succs = [dense] * (num_frames - 1) + [None]
    return UnfoldedGraph(num_frames, frame_labels, frame_preds, frame_succs, lab.copy())


def _as_scores(emissions) -> np.ndarray:
    if isinstance(emissions, EmissionTable):
        return emissions.scores
    return EmissionTable(np.asarray(emissions, dtype=np.float64)).scores


def _check_shapes(graph: UnfoldedGraph, f: np.ndarray, tr: TransitionTable) -> None:
    if f.shape[0] != graph.num_frames:
        raise CriterionError(
            f"graph spans {graph.num_frames} frames but emissions have {f.shape[0]}"
        )
    if tr.num_labels != f.shape[1]:
        raise CriterionError(
            f"transition table covers {tr.num_labels} labels, emissions {f.shape[1]}"
        )
    if graph.max_label() >= f.shape[1]:
        raise CriterionError("graph refers to labels outside the emission table")


class _EdgeCache:
    """Per-call cache of gathered transition scores.

    Graph builders reuse identical per-frame arrays whenever the state
    layout repeats, so gathering trans[prev_label, label] once per
    distinct layout removes the dominant cost on long uniform lattices.
    """

    def __init__(self, trans: np.ndarray):
        self.trans = trans
        self._cache: dict = {}

    def gather(self, preds, prev_labels, labels):
        key = (id(preds), id(prev_labels), id(labels))
        hit = self._cache.get(key)
        if hit is None:
            clipped = np.where(preds >= 0, preds, 0)
            hit = (self.trans[prev_labels[clipped], labels[:, None]], clipped, preds >= 0)
            self._cache[key] = hit
        return hit


def forward_score(
    graph: UnfoldedGraph, emissions, transitions: TransitionTable, mode: str = "logadd"
) -> tuple[float, list]:
    """Accumulate path scores over the graph.

    mode="logadd" gives the Forward score (log-sum-exp over all accepted
    paths); mode="max" gives the best-path (Viterbi) score.  Returns the
    score and the per-frame forward tables.
    """
    if mode not in ("logadd", "max"):
        raise CriterionError(f"unknown mode {mode!r}")
    f = _as_scores(emissions)
    _check_shapes(graph, f, transitions)
    reduce = np.logaddexp.reduce if mode == "logadd" else np.max
    cache = _EdgeCache(transitions.trans)
    alphas: list[np.ndarray] = []
    alpha = transitions.start[graph.frame_labels[0]] + f[0, graph.frame_labels[0]]
    alphas.append(alpha)
    for t in range(1, graph.num_frames):
        lab = graph.frame_labels[t]
        edge, clipped, valid = cache.gather(
            graph.frame_preds[t], graph.frame_labels[t - 1], lab
        )
        scores = np.where(valid, alpha[clipped] + edge, NEG_INF)
        alpha = f[t, lab] + reduce(scores, axis=1)
        alphas.append(alpha)
    final = alpha[graph.accepting]
    score = logadd(final) if mode == "logadd" else float(np.max(final))
    return score, alphas


def viterbi(graph: UnfoldedGraph, emissions, transitions: TransitionTable):
    """Best accepted frame labeling and its score.

    Ties break toward the lowest state index, both among predecessors
    and among accepting states.
    """
    f = _as_scores(emissions)
    _check_shapes(graph, f, transitions)
    cache = _EdgeCache(transitions.trans)
    alpha = transitions.start[graph.frame_labels[0]] + f[0, graph.frame_labels[0]]
    alphas = [alpha]
    back: list[np.ndarray] = []
    for t in range(1, graph.num_frames):
        lab = graph.frame_labels[t]
        preds = graph.frame_preds[t]
        edge, clipped, valid = cache.gather(preds, graph.frame_labels[t - 1], lab)
        scores = np.where(valid, alpha[clipped] + edge, NEG_INF)
        choice = np.argmax(scores, axis=1)
        back.append(clipped[np.arange(len(lab)), choice])
        alpha = f[t, lab] + scores[np.arange(len(lab)), choice]
        alphas.append(alpha)
    final = alphas[-1][graph.accepting]
    best = int(graph.accepting[int(np.argmax(final))])
    score = float(np.max(final))
    states = [best]
    for t in range(graph.num_frames - 1, 0, -1):
        states.append(int(back[t - 1][states[-1]]))
    states.reverse()
    path = [int(graph.frame_labels[t][s]) for t, s in enumerate(states)]
    return path, score


@dataclass
class _FBResult:
    log_z: float
    label_marginals: np.ndarray  # (T, L)
    trans_marginals: np.ndarray  # (L, L)
    start_marginals: np.ndarray  # (L,)


def forward_backward(graph: UnfoldedGraph, emissions, transitions: TransitionTable) -> _FBResult:
    """Forward score plus posterior marginals for states, transitions,
    and start scores (the exact gradient ingredients)."""
    f = _as_scores(emissions)
    _check_shapes(graph, f, transitions)
    num_labels = f.shape[1]
    cache = _EdgeCache(transitions.trans)
    T = graph.num_frames

    alphas = [transitions.start[graph.frame_labels[0]] + f[0, graph.frame_labels[0]]]
    for t in range(1, T):
        lab = graph.frame_labels[t]
        edge, clipped, valid = cache.gather(
            graph.frame_preds[t], graph.frame_labels[t - 1], lab
        )
        scores = np.where(valid, alphas[-1][clipped] + edge, NEG_INF)
        alphas.append(f[t, lab] + np.logaddexp.reduce(scores, axis=1))

    betas = [None] * T
    last = np.full(len(graph.frame_labels[-1]), NEG_INF)
    last[graph.accepting] = 0.0
    betas[T - 1] = last
    succ_cache: dict = {}
    for t in range(T - 2, -1, -1):
        lab = graph.frame_labels[t]
        succs = graph.frame_succs[t]
        next_lab = graph.frame_labels[t + 1]
        key = (id(succs), id(lab), id(next_lab))
        hit = succ_cache.get(key)
        if hit is None:
            clipped = np.where(succs >= 0, succs, 0)
            hit = (transitions.trans[lab[:, None], next_lab[clipped]], clipped, succs >= 0)
            succ_cache[key] = hit
        edge, clipped, valid = hit
        scores = np.where(
            valid, edge + f[t + 1, next_lab[clipped]] + betas[t + 1][clipped], NEG_INF
        )
        betas[t] = np.logaddexp.reduce(scores, axis=1)

    log_z = logadd(alphas[-1][graph.accepting])
    if not np.isfinite(log_z):
        raise CriterionError("no accepted path has finite score")

    label_marg = np.zeros((T, num_labels))
    for t in range(T):
        gamma = np.exp(alphas[t] + betas[t] - log_z)
        np.add.at(label_marg[t], graph.frame_labels[t], gamma)

    # frames sharing one link structure scatter into the same label pairs,
    # so their masses accumulate densely first and scatter once at the end
    trans_marg = np.zeros(num_labels * num_labels)
    grouped: dict = {}
    for t in range(1, T):
        lab = graph.frame_labels[t]
        prev_lab = graph.frame_labels[t - 1]
        edge, clipped, valid = cache.gather(graph.frame_preds[t], prev_lab, lab)
        log_m = alphas[t - 1][clipped] + edge + (f[t, lab] + betas[t])[:, None] - log_z
        m = np.where(valid, np.exp(log_m), 0.0)
        key = (id(graph.frame_preds[t]), id(prev_lab), id(lab))
        entry = grouped.get(key)
        if entry is None:
            flat = prev_lab[clipped] * num_labels + lab[:, None]
            grouped[key] = [flat, valid, m]
        else:
            entry[2] = entry[2] + m
    for flat, valid, m in grouped.values():
        np.add.at(trans_marg, flat[valid], m[valid])

    start_marg = np.zeros(num_labels)
    np.add.at(start_marg, graph.frame_labels[0], np.exp(alphas[0] + betas[0] - log_z))
    return _FBResult(log_z, label_marg, trans_marg.reshape(num_labels, num_labels), start_marg)


def ctc_loss(emissions, labels, blank_id: int, strict: bool = False) -> CriterionResult:
    """Negative Forward score of the blank-interleaved lattice.

    Assumes per-frame normalized emission rows (checked when ``strict``).
    Transitions play no role, so their gradients are zero.
    """
    f = _as_scores(emissions)
    if strict:
        rows = np.array([logadd(row) for row in f])
        if np.max(np.abs(rows)) > 1e-5:
            raise CriterionError("emission rows are not normalized (logadd != 0)")
    graph = build_ctc_graph(labels, f.shape[0], blank_id)
    num_labels = f.shape[1]
    fb = forward_backward(graph, f, TransitionTable.zeros(num_labels))
    return CriterionResult(
        loss=-fb.log_z,
        d_emissions=-fb.label_marginals,
        d_transitions=np.zeros((num_labels, num_labels)),
        d_start=np.zeros(num_labels),
    )


def asg_loss(emissions, transitions: TransitionTable, labels) -> CriterionResult:
    """Globally normalized sequence loss.

    Negative Forward score of the transcription lattice plus the Forward
    score of the fully connected lattice; both use emission and
    transition scores, which may be un-normalized.  Gradients are the
    difference of posterior marginals (full minus constrained).
    """
    f = _as_scores(emissions)
    graph = build_asg_graph(labels, f.shape[0])
    full = build_full_graph(f.shape[1], f.shape[0])
    num = forward_backward(graph, f, transitions)
    den = forward_backward(full, f, transitions)
    return CriterionResult(
        loss=-num.log_z + den.log_z,
        d_emissions=den.label_marginals - num.label_marginals,
        d_transitions=den.trans_marginals - num.trans_marginals,
        d_start=den.start_marginals - num.start_marginals,
    )


def _default_threads() -> int:
    return max(1, os.cpu_count() or 1)


def asg_loss_batch(
    emissions_list, transitions: TransitionTable, labels_list, threads: int | None = None
) -> list[CriterionResult]:
    """Evaluate independent (emissions, labels) pairs, optionally in
    parallel.  Results do not depend on the thread count."""
    if len(emissions_list) != len(labels_list):
        raise CriterionError("batch emission/label counts differ")
    workers = threads or _default_threads()
    if workers == 1 or len(emissions_list) <= 1:
        return [asg_loss(f, transitions, y) for f, y in zip(emissions_list, labels_list)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda fy: asg_loss(fy[0], transitions, fy[1]),
                             zip(emissions_list, labels_list)))


def ctc_loss_batch(
    emissions_list, labels_list, blank_id: int, threads: int | None = None
) -> list[CriterionResult]:
    if len(emissions_list) != len(labels_list):
        raise CriterionError("batch emission/label counts differ")
    workers = threads or _default_threads()
    if workers == 1 or len(emissions_list) <= 1:
        return [ctc_loss(f, y, blank_id) for f, y in zip(emissions_list, labels_list)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda fy: ctc_loss(fy[0], fy[1], blank_id),
                             zip(emissions_list, labels_list)))
