import itertools
import math

import numpy as np
import pytest

from convasr.alphabet import collapse_path, default_alphabet, encode_transcription
from convasr.criterion import (
    CriterionError,
    EmissionTable,
    InfeasibleError,
    TransitionTable,
    asg_loss,
    asg_loss_batch,
    build_asg_graph,
    build_ctc_graph,
    build_full_graph,
    build_linear_graph,
    ctc_loss,
    ctc_loss_batch,
    forward_score,
    log_softmax,
    logadd,
    viterbi,
)

import oracles
from conftest import random_label_sequence, random_transitions


class TestLogadd:
    def test_single_value(self):
        assert logadd([3.25]) == 3.25

    def test_two_zeros(self):
        assert abs(logadd([0.0, 0.0]) - math.log(2.0)) < 1e-12

    def test_large_values_dont_overflow(self):
        assert abs(logadd([1000.0, 1000.0]) - (1000.0 + math.log(2.0))) < 1e-9
        assert np.isfinite(logadd([1e30, 1e30]))

    def test_empty_is_neg_inf(self):
        assert logadd([]) == -math.inf

    def test_all_neg_inf(self):
        assert logadd([-math.inf, -math.inf]) == -math.inf

    def test_matches_reference(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            vals = rng.normal(scale=10.0, size=rng.integers(1, 20))
            assert abs(logadd(vals) - oracles.logadd_ref(vals)) < 1e-12


class TestGraphConstruction:
    def test_ctc_a_two_frames_accepts_exactly_three_paths(self):
        g = build_ctc_graph([0], 2, blank_id=3)
        got = sorted(oracles.enumerate_graph_paths(g))
        assert got == sorted([[0, 0], [3, 0], [0, 3]])

    def test_ctc_cat_three_frames_single_path(self):
        g = build_ctc_graph([0, 1, 2], 3, blank_id=9)
        assert oracles.enumerate_graph_paths(g) == [[0, 1, 2]]

    def test_ctc_double_letter_needs_separator(self):
        with pytest.raises(InfeasibleError):
            build_ctc_graph([0, 0], 2, blank_id=3)
        g = build_ctc_graph([0, 0], 3, blank_id=3)
        assert oracles.enumerate_graph_paths(g) == [[0, 3, 0]]

    def test_ctc_rejects_blank_in_transcription(self):
        with pytest.raises(CriterionError):
            build_ctc_graph([0, 3], 4, blank_id=3)

    def test_ctc_paths_match_textbook_recursion(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            T = int(rng.integers(1, 8))
            labels = [int(rng.integers(0, 3)) for _ in range(rng.integers(1, 4))]
            need = len(labels) + sum(
                1 for i in range(len(labels) - 1) if labels[i] == labels[i + 1]
            )
            if need > T:
                continue
            g = build_ctc_graph(labels, T, blank_id=3)
            got = sorted(oracles.enumerate_graph_paths(g))
            want = sorted(oracles.enumerate_ctc_paths(labels, 3, T))
            assert got == want

    def test_asg_cat_five_frames_has_six_paths(self):
        g = build_asg_graph([0, 1, 2], 5)
        assert len(oracles.enumerate_graph_paths(g)) == math.comb(4, 2)

    def test_asg_single_label(self):
        g = build_asg_graph([2], 1)
        assert oracles.enumerate_graph_paths(g) == [[2]]

    def test_asg_exact_fit_single_path(self):
        g = build_asg_graph([0, 1, 2], 3)
        assert oracles.enumerate_graph_paths(g) == [[0, 1, 2]]

    def test_asg_paths_match_stars_and_bars(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            T = int(rng.integers(1, 8))
            n = int(rng.integers(1, min(4, T) + 1))
            labels = random_label_sequence(rng, n, 4)
            g = build_asg_graph(labels, T)
            got = sorted(oracles.enumerate_graph_paths(g))
            want = sorted(oracles.enumerate_asg_paths(labels, T))
            assert got == want

    def test_asg_infeasible(self):
        with pytest.raises(InfeasibleError):
            build_asg_graph([0, 1, 2], 2)

    def test_full_graph_path_counts(self):
        assert len(oracles.enumerate_graph_paths(build_full_graph(3, 2))) == 9
        assert len(oracles.enumerate_graph_paths(build_full_graph(5, 1))) == 5

    def test_asg_paths_collapse_to_transcription(self):
        # every accepted path stands for exactly the encoded transcription
        ab = default_alphabet()
        rng = np.random.default_rng(3)
        for word in ("cat", "hello", "aaa", "ball"):
            labels = encode_transcription(word, ab)
            T = len(labels) + int(rng.integers(0, 4))
            g = build_asg_graph(labels, T)
            for path in oracles.enumerate_graph_paths(g):
                assert collapse_path(path, ab) == labels

    def test_linear_graph_empty_chain(self):
        with pytest.raises(InfeasibleError):
            build_linear_graph([], [], 3)


class TestForwardScore:
    def test_single_path_graph_both_modes_agree(self):
        rng = np.random.default_rng(4)
        f = rng.normal(size=(3, 4))
        tr = random_transitions(rng, 4)
        g = build_asg_graph([0, 1, 2], 3)
        want = oracles.path_score([0, 1, 2], f, tr.trans, tr.start)
        la, _ = forward_score(g, f, tr, "logadd")
        mx, _ = forward_score(g, f, tr, "max")
        assert abs(la - want) < 1e-12
        assert abs(mx - want) < 1e-12

    def test_uniform_full_graph_closed_form(self):
        c = -1.37
        f = np.full((3, 4), c)
        score, _ = forward_score(build_full_graph(4, 3), f, TransitionTable.zeros(4))
        assert abs(score - (3 * c + 3 * math.log(4))) < 1e-12

    def test_matches_enumeration(self):
        rng = np.random.default_rng(5)
        for _ in range(60):
            T = int(rng.integers(1, 7))
            L = int(rng.integers(2, 5))
            f = rng.normal(size=(T, L))
            tr = random_transitions(rng, L, scale=1.0)
            g = build_full_graph(L, T)
            scores = [
                oracles.path_score(p, f, tr.trans, tr.start)
                for p in oracles.enumerate_graph_paths(g)
            ]
            la, _ = forward_score(g, f, tr, "logadd")
            mx, _ = forward_score(g, f, tr, "max")
            assert abs(la - oracles.logadd_ref(scores)) < 1e-10
            assert abs(mx - max(scores)) < 1e-10

    def test_logadd_at_least_max_and_bounded_by_path_count(self):
        rng = np.random.default_rng(6)
        for _ in range(40):
            T = int(rng.integers(1, 6))
            L = int(rng.integers(2, 5))
            f = rng.normal(size=(T, L))
            tr = random_transitions(rng, L)
            g = build_full_graph(L, T)
            la, _ = forward_score(g, f, tr, "logadd")
            mx, _ = forward_score(g, f, tr, "max")
            assert la >= mx - 1e-12
            assert la <= mx + T * math.log(L) + 1e-12

    def test_shape_mismatch_raises(self):
        g = build_full_graph(4, 3)
        with pytest.raises(CriterionError):
            forward_score(g, np.zeros((2, 4)), TransitionTable.zeros(4))
        with pytest.raises(CriterionError):
            forward_score(g, np.zeros((3, 4)), TransitionTable.zeros(5))

    def test_unknown_mode(self):
        with pytest.raises(CriterionError):
            forward_score(build_full_graph(2, 2), np.zeros((2, 2)), TransitionTable.zeros(2), "avg")


class TestViterbi:
    def test_forced_single_path(self):
        rng = np.random.default_rng(7)
        f = rng.normal(size=(3, 4))
        tr = random_transitions(rng, 4)
        path, score = viterbi(build_asg_graph([0, 1, 2], 3), f, tr)
        assert path == [0, 1, 2]
        assert abs(score - oracles.path_score(path, f, tr.trans, tr.start)) < 1e-12

    def test_full_graph_zero_transitions_is_framewise_argmax(self):
        rng = np.random.default_rng(8)
        f = rng.normal(size=(6, 5))
        path, _ = viterbi(build_full_graph(5, 6), f, TransitionTable.zeros(5))
        assert path == list(np.argmax(f, axis=1))

    def test_matches_enumerated_argmax(self):
        rng = np.random.default_rng(9)
        for _ in range(40):
            T = int(rng.integers(1, 7))
            L = int(rng.integers(2, 5))
            f = rng.normal(size=(T, L))
            tr = random_transitions(rng, L, scale=1.0)
            n = int(rng.integers(1, min(4, T) + 1))
            g = build_asg_graph(random_label_sequence(rng, n, L), T)
            paths = oracles.enumerate_graph_paths(g)
            scores = [oracles.path_score(p, f, tr.trans, tr.start) for p in paths]
            path, score = viterbi(g, f, tr)
            assert abs(score - max(scores)) < 1e-10
            assert path in paths

    def test_tie_breaks_toward_lowest_state(self):
        # all-equal scores: the lowest-index accepted path must win
        f = np.zeros((3, 3))
        path, _ = viterbi(build_full_graph(3, 3), f, TransitionTable.zeros(3))
        assert path == [0, 0, 0]


class TestCtcLoss:
    def test_single_frame_uniform(self):
        f = log_softmax(np.zeros((1, 2)))
        result = ctc_loss(f, [0], blank_id=1)
        assert abs(result.loss - math.log(2.0)) < 1e-12

    def test_three_path_example(self):
        rng = np.random.default_rng(10)
        f = log_softmax(rng.normal(size=(2, 4)))
        result = ctc_loss(f, [0], blank_id=3)
        zeros = np.zeros((4, 4)), np.zeros(4)
        want = -oracles.logadd_ref(
            [oracles.path_score(p, f, *zeros) for p in ([0, 0], [3, 0], [0, 3])]
        )
        assert abs(result.loss - want) < 1e-12

    def test_matches_bruteforce(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            T = int(rng.integers(1, 8))
            L = int(rng.integers(2, 6))
            labels = [int(rng.integers(0, L - 1)) for _ in range(rng.integers(1, 5))]
            need = len(labels) + sum(
                1 for i in range(len(labels) - 1) if labels[i] == labels[i + 1]
            )
            if need > T:
                continue
            f = log_softmax(rng.normal(size=(T, L)))
            result = ctc_loss(f, labels, blank_id=L - 1)
            want = oracles.ctc_loss_bruteforce(f, labels, L - 1)
            assert abs(result.loss - want) < 1e-10

    def test_nonnegative_for_normalized_rows(self):
        rng = np.random.default_rng(12)
        for _ in range(30):
            T = int(rng.integers(2, 7))
            f = log_softmax(rng.normal(size=(T, 4)))
            labels = random_label_sequence(rng, int(rng.integers(1, min(3, T) + 1)), 3)
            assert ctc_loss(f, labels, blank_id=3).loss >= -1e-10

    def test_strict_mode_rejects_unnormalized(self):
        with pytest.raises(CriterionError):
            ctc_loss(np.ones((3, 4)), [0], blank_id=3, strict=True)
        ctc_loss(log_softmax(np.ones((3, 4))), [0], blank_id=3, strict=True)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(13)
        for _ in range(10):
            T = int(rng.integers(2, 6))
            L = int(rng.integers(3, 5))
            labels = random_label_sequence(rng, int(rng.integers(1, min(3, T) + 1)), L - 1)
            f = log_softmax(rng.normal(size=(T, L)))
            result = ctc_loss(f, labels, blank_id=L - 1)
            for _ in range(8):
                i = int(rng.integers(0, T * L))
                fd = oracles.central_difference(lambda: ctc_loss(f, labels, L - 1).loss, f, i)
                assert oracles.relative_close(result.d_emissions.reshape(-1)[i], fd)

    def test_infeasible(self):
        with pytest.raises(InfeasibleError):
            ctc_loss(log_softmax(np.zeros((1, 3))), [0, 1], blank_id=2)


class TestAsgLoss:
    def test_uniform_example(self):
        result = asg_loss(np.zeros((2, 4)), TransitionTable.zeros(4), [0])
        assert abs(result.loss - 2 * math.log(4.0)) < 1e-12

    def test_matches_bruteforce(self):
        rng = np.random.default_rng(14)
        for _ in range(50):
            T = int(rng.integers(1, 7))
            L = int(rng.integers(2, 5))
            f = rng.normal(size=(T, L))
            tr = random_transitions(rng, L, scale=0.5)
            labels = random_label_sequence(rng, int(rng.integers(1, min(4, T) + 1)), L)
            result = asg_loss(f, tr, labels)
            want = oracles.asg_loss_bruteforce(f, tr.trans, tr.start, labels)
            assert abs(result.loss - want) < 1e-8

    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(15)
        for _ in range(10):
            T = int(rng.integers(2, 6))
            L = int(rng.integers(2, 5))
            f = rng.normal(size=(T, L))
            tr = random_transitions(rng, L)
            labels = random_label_sequence(rng, int(rng.integers(1, min(4, T) + 1)), L)
            result = asg_loss(f, tr, labels)
            for _ in range(6):
                i = int(rng.integers(0, T * L))
                fd = oracles.central_difference(lambda: asg_loss(f, tr, labels).loss, f, i)
                assert oracles.relative_close(result.d_emissions.reshape(-1)[i], fd)
            for _ in range(6):
                i = int(rng.integers(0, L * L))
                fd = oracles.central_difference(
                    lambda: asg_loss(f, tr, labels).loss, tr.trans, i
                )
                assert oracles.relative_close(result.d_transitions.reshape(-1)[i], fd)
            for _ in range(3):
                i = int(rng.integers(0, L))
                fd = oracles.central_difference(
                    lambda: asg_loss(f, tr, labels).loss, tr.start, i
                )
                assert oracles.relative_close(result.d_start.reshape(-1)[i], fd)

    def test_loss_nonnegative(self):
        rng = np.random.default_rng(16)
        for _ in range(50):
            T = int(rng.integers(1, 7))
            L = int(rng.integers(2, 6))
            f = 3.0 * rng.normal(size=(T, L))
            tr = random_transitions(rng, L, scale=1.0)
            labels = random_label_sequence(rng, int(rng.integers(1, min(4, T) + 1)), L)
            assert asg_loss(f, tr, labels).loss >= -1e-10

    def test_emission_gradient_rows_sum_to_zero(self):
        rng = np.random.default_rng(17)
        for _ in range(20):
            T = int(rng.integers(1, 7))
            L = int(rng.integers(2, 6))
            f = rng.normal(size=(T, L))
            tr = random_transitions(rng, L)
            labels = random_label_sequence(rng, int(rng.integers(1, min(4, T) + 1)), L)
            rows = asg_loss(f, tr, labels).d_emissions.sum(axis=1)
            np.testing.assert_allclose(rows, 0.0, atol=1e-8)

    def test_framewise_constant_shift_invariance(self):
        rng = np.random.default_rng(18)
        for _ in range(20):
            T = int(rng.integers(1, 6))
            L = int(rng.integers(2, 5))
            f = rng.normal(size=(T, L))
            tr = random_transitions(rng, L)
            labels = random_label_sequence(rng, int(rng.integers(1, min(3, T) + 1)), L)
            base = asg_loss(f, tr, labels).loss
            shifted = f.copy()
            t = int(rng.integers(0, T))
            shifted[t] += rng.normal(scale=5.0)
            assert abs(asg_loss(shifted, tr, labels).loss - base) < 1e-8

    def test_deterministic(self):
        rng = np.random.default_rng(19)
        f = rng.normal(size=(5, 4))
        tr = random_transitions(rng, 4)
        a = asg_loss(f, tr, [0, 1])
        b = asg_loss(f, tr, [0, 1])
        assert a.loss == b.loss
        assert np.array_equal(a.d_emissions, b.d_emissions)

    def test_infeasible(self):
        with pytest.raises(InfeasibleError):
            asg_loss(np.zeros((2, 4)), TransitionTable.zeros(4), [0, 1, 2])


class TestBatch:
    def test_thread_count_does_not_change_results(self):
        rng = np.random.default_rng(20)
        L = 5
        tr = random_transitions(rng, L)
        emissions, labels = [], []
        for _ in range(8):
            T = int(rng.integers(3, 9))
            emissions.append(rng.normal(size=(T, L)))
            labels.append(random_label_sequence(rng, int(rng.integers(1, 4)), L))
        serial = asg_loss_batch(emissions, tr, labels, threads=1)
        parallel = asg_loss_batch(emissions, tr, labels, threads=4)
        for a, b in zip(serial, parallel):
            assert a.loss == b.loss
            assert np.array_equal(a.d_emissions, b.d_emissions)
            assert np.array_equal(a.d_transitions, b.d_transitions)

    def test_ctc_batch(self):
        rng = np.random.default_rng(21)
        emissions = [log_softmax(rng.normal(size=(6, 4))) for _ in range(4)]
        labels = [random_label_sequence(rng, 2, 3) for _ in range(4)]
        serial = ctc_loss_batch(emissions, labels, blank_id=3, threads=1)
        parallel = ctc_loss_batch(emissions, labels, blank_id=3, threads=3)
        for a, b in zip(serial, parallel):
            assert a.loss == b.loss

    def test_length_mismatch(self):
        with pytest.raises(CriterionError):
            asg_loss_batch([np.zeros((2, 2))], TransitionTable.zeros(2), [])


class TestEmissionTable:
    def test_normalized_rows(self):
        rng = np.random.default_rng(22)
        table = EmissionTable.from_logits(rng.normal(size=(5, 7)), normalize=True)
        assert table.normalized
        for row in table.scores:
            assert abs(logadd(row)) < 1e-10

    def test_nonfinite_rejected(self):
        with pytest.raises(CriterionError):
            EmissionTable(np.array([[0.0, np.inf]]))

    def test_normalized_flag_validated(self):
        with pytest.raises(CriterionError, match="normalized"):
            EmissionTable(np.ones((2, 3)), normalized=True)
        EmissionTable(log_softmax(np.ones((2, 3))), normalized=True)
