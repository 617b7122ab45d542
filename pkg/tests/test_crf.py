import itertools

import numpy as np
import pytest

from lexiforge.tagger.crf import (CrfParams, crf_batch_nll_grad, crf_log_partition, crf_nll, logsumexp, path_score,
                                  viterbi_decode)


def random_crf(rng, K, scale=1.0):
    return CrfParams(rng.normal(scale=scale, size=(K, K)), rng.normal(scale=scale, size=K),
                     rng.normal(scale=scale, size=K))


def enumerate_paths(em, crf):
    T, K = em.shape
    scores = {p: path_score(em, crf, p) for p in itertools.product(range(K), repeat=T)}
    return scores


class TestOracle:
    @pytest.mark.parametrize("seed", range(40))
    def test_partition_and_viterbi_match_enumeration(self, seed):
        rng = np.random.default_rng(seed)
        T, K = int(rng.integers(1, 6)), int(rng.integers(1, 5))
        em = rng.normal(scale=2.0, size=(T, K))
        crf = random_crf(rng, K)
        scores = enumerate_paths(em, crf)
        vals = np.array(list(scores.values()))
        brute = float(np.log(np.exp(vals - vals.max()).sum()) + vals.max())
        assert crf_log_partition(em, crf) == pytest.approx(brute, rel=1e-10, abs=1e-10)
        path, best = viterbi_decode(em, crf)
        assert best == pytest.approx(vals.max(), rel=1e-12, abs=1e-12)
        assert scores[tuple(path)] == pytest.approx(vals.max(), rel=1e-12, abs=1e-12)

    def test_single_label(self):
        em = np.array([[1.0], [2.0]])
        crf = CrfParams.zeros(1)
        assert crf_log_partition(em, crf) == pytest.approx(3.0)
        assert viterbi_decode(em, crf)[0] == [0, 0]


class TestProperties:
    def test_probabilities_sum_to_one(self):
        rng = np.random.default_rng(0)
        em = rng.normal(size=(4, 3))
        crf = random_crf(rng, 3)
        total = sum(np.exp(-crf_nll(em, crf, p)) for p in itertools.product(range(3), repeat=4))
        assert total == pytest.approx(1.0, abs=1e-12)

    def test_emission_shift_invariance(self):
        rng = np.random.default_rng(1)
        em = rng.normal(size=(5, 4))
        crf = random_crf(rng, 4)
        gold = [0, 1, 2, 3, 0]
        shifted = em + rng.normal(size=(5, 1))  # same constant added to every label at each position
        assert crf_nll(shifted, crf, gold) == pytest.approx(crf_nll(em, crf, gold), abs=1e-10)
        assert viterbi_decode(shifted, crf)[0] == viterbi_decode(em, crf)[0]

    def test_ties_go_to_smallest_index(self):
        assert viterbi_decode(np.zeros((3, 4)), CrfParams.zeros(4))[0] == [0, 0, 0]

    def test_large_scores_stay_finite(self):
        em = np.full((3, 2), 800.0)
        assert np.isfinite(crf_log_partition(em, CrfParams.zeros(2)))

    def test_logsumexp_all_neg_inf(self):
        assert logsumexp(np.array([-np.inf, -np.inf])) == -np.inf


class TestBatch:
    def test_matches_per_sequence(self):
        rng = np.random.default_rng(2)
        K, lengths = 4, [5, 3, 1]
        crf = random_crf(rng, K, 0.5)
        T = max(lengths)
        em = rng.normal(size=(3, T, K))
        mask = np.array([[t < n for t in range(T)] for n in lengths])
        gold = rng.integers(0, K, size=(3, T))
        loss, d_em, d_t, d_s, d_e = crf_batch_nll_grad(em, mask, gold, crf)
        expected = sum(crf_nll(em[i, :n], crf, gold[i, :n]) for i, n in enumerate(lengths))
        assert loss == pytest.approx(expected, abs=1e-10)
        assert np.all(d_em[~mask] == 0)

    def test_gradient_finite_difference(self):
        rng = np.random.default_rng(3)
        K, T = 3, 4
        crf = random_crf(rng, K, 0.5)
        em = rng.normal(size=(2, T, K))
        mask = np.array([[True] * 4, [True, True, False, False]])
        gold = rng.integers(0, K, size=(2, T))
        _, d_em, d_t, d_s, d_e = crf_batch_nll_grad(em, mask, gold, crf)
        eps = 1e-6

        def loss():
            return crf_batch_nll_grad(em, mask, gold, crf)[0]

        for arr, grad in ((em, d_em), (crf.transitions, d_t), (crf.start, d_s), (crf.stop, d_e)):
            for idx in np.ndindex(arr.shape):
                orig = arr[idx]
                arr[idx] = orig + eps
                up = loss()
                arr[idx] = orig - eps
                down = loss()
                arr[idx] = orig
                assert (up - down) / (2 * eps) == pytest.approx(grad[idx], abs=1e-6)
