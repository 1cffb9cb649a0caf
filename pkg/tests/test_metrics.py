import itertools

import numpy as np
import pytest

from reidkit.errors import DataError
from reidkit.distance import DistanceMatrix
from reidkit.metrics import (
    EvalProtocol,
    EvalReport,
    average_precision,
    cmc_curve,
    evaluate,
    rank_gallery,
)
from conftest import build_index


def ap_oracle(relevance):
    """Brute-force AP: precision computed at every relevant cutoff by
    recounting from scratch."""
    total = sum(relevance)
    acc = 0.0
    for k in range(1, len(relevance) + 1):
        if relevance[k - 1]:
            acc += sum(relevance[:k]) / k
    return acc / total


class TestRankGallery:
    def test_stable_tie_break(self):
        order = rank_gallery(np.array([0.3, 0.1, 0.3]), np.ones(3, bool))
        assert order.tolist() == [1, 0, 2]

    def test_single_valid(self):
        order = rank_gallery(np.array([0.5, 0.1, 0.9]), np.array([False, False, True]))
        assert order.tolist() == [2]

    def test_full_tie_identity_order(self):
        order = rank_gallery(np.full(4, 0.7), np.ones(4, bool))
        assert order.tolist() == [0, 1, 2, 3]


class TestAveragePrecision:
    def test_single_hit(self):
        assert average_precision([True]) == 1.0

    def test_mixed(self):
        assert average_precision([1, 0, 1, 0]) == pytest.approx(5 / 6)

    def test_late_hit(self):
        assert average_precision([0, 0, 1]) == pytest.approx(1 / 3)

    def test_no_relevant_rejected(self):
        with pytest.raises(DataError):
            average_precision([0, 0, 0])

    def test_matches_oracle_exhaustively(self):
        for n in range(1, 8):
            for bits in itertools.product([0, 1], repeat=n):
                if not any(bits):
                    continue
                assert average_precision(list(bits)) == pytest.approx(
                    ap_oracle(list(bits)), abs=1e-12
                )


class TestCmcCurve:
    def test_immediate_hit(self):
        np.testing.assert_allclose(cmc_curve([1], 5), np.ones(5))

    def test_rank_two(self):
        np.testing.assert_allclose(cmc_curve([2], 3), [0, 1, 1])

    def test_two_queries(self):
        np.testing.assert_allclose(cmc_curve([1, 3], 3), [0.5, 0.5, 1.0])

    def test_non_decreasing(self, rng):
        ranks = rng.integers(1, 30, size=50)
        curve = cmc_curve(ranks, 20)
        assert (np.diff(curve) >= 0).all()


class TestEvaluate:
    def test_perfect_retrieval(self):
        queries = build_index([(1, 1, "query")])
        gallery = build_index([(1, 2, "gallery"), (2, 2, "gallery")])
        d = DistanceMatrix(np.array([[0.1, 0.9]]), "euclidean")
        report = evaluate(queries, gallery, d)
        assert report.map == 1.0
        assert report.cmc[0] == 1.0

    def test_same_camera_positive_filtered(self):
        queries = build_index([(1, 1, "query")])
        gallery = build_index([(1, 1, "gallery"), (1, 2, "gallery"), (2, 1, "gallery")])
        d = DistanceMatrix(np.array([[0.0, 0.5, 0.2]]), "euclidean")
        report = evaluate(queries, gallery, d, EvalProtocol(max_rank=2))
        # same-pid same-cam item removed; ranking [pid2, pid1-cam2]
        assert report.map == pytest.approx(0.5)
        assert report.cmc[0] == 0.0
        assert report.cmc[1] == 1.0

    def test_filter_off_keeps_same_camera(self):
        queries = build_index([(1, 1, "query")])
        gallery = build_index([(1, 1, "gallery"), (2, 1, "gallery")])
        d = DistanceMatrix(np.array([[0.0, 0.5]]), "euclidean")
        report = evaluate(
            queries, gallery, d, EvalProtocol(cross_camera_filter=False, max_rank=2)
        )
        assert report.map == 1.0

    def test_queries_without_positives_excluded(self):
        queries = build_index([(1, 1, "query"), (9, 1, "query")])
        gallery = build_index([(1, 2, "gallery"), (2, 2, "gallery")])
        d = DistanceMatrix(np.array([[0.1, 0.9], [0.5, 0.5]]), "euclidean")
        report = evaluate(queries, gallery, d)
        assert report.num_valid_queries == 1
        assert report.map == 1.0

    def test_all_queries_excluded_errors(self):
        queries = build_index([(9, 1, "query")])
        gallery = build_index([(1, 2, "gallery")])
        d = DistanceMatrix(np.array([[0.1]]), "euclidean")
        with pytest.raises(DataError, match="empty evaluation"):
            evaluate(queries, gallery, d)

    def test_shape_mismatch(self):
        queries = build_index([(1, 1, "query")])
        gallery = build_index([(1, 2, "gallery")])
        d = DistanceMatrix(np.zeros((2, 2)), "euclidean")
        with pytest.raises(DataError, match="shape"):
            evaluate(queries, gallery, d)


class TestProperties:
    def _random_setup(self, rng, nq=6, ng=15):
        queries = build_index(
            [(int(p), int(c), "query") for p, c in
             zip(rng.integers(0, 4, nq), rng.integers(0, 3, nq))]
        )
        gallery = build_index(
            [(int(p), int(c), "gallery") for p, c in
             zip(rng.integers(0, 4, ng), rng.integers(0, 3, ng))]
        )
        d = rng.uniform(0.1, 1.0, (nq, ng))
        return queries, gallery, d

    def test_monotone_transform_invariance(self, rng):
        queries, gallery, d = self._random_setup(rng)
        r1 = evaluate(queries, gallery, DistanceMatrix(d, "euclidean"))
        r2 = evaluate(queries, gallery, DistanceMatrix(np.expm1(3 * d), "euclidean"))
        assert r1.map == pytest.approx(r2.map, abs=1e-12)
        np.testing.assert_allclose(r1.cmc, r2.cmc)

    def test_gallery_permutation_invariance(self, rng):
        queries, gallery, d = self._random_setup(rng)
        perm = rng.permutation(len(gallery))
        permuted = build_index(
            [(gallery[i].person_id, gallery[i].camera_id, "gallery") for i in perm]
        )
        r1 = evaluate(queries, gallery, DistanceMatrix(d, "euclidean"))
        r2 = evaluate(queries, permuted, DistanceMatrix(d[:, perm], "euclidean"))
        assert r1.map == pytest.approx(r2.map, abs=1e-12)
        np.testing.assert_allclose(r1.cmc, r2.cmc)

    def test_report_rejects_decreasing_cmc(self):
        with pytest.raises(DataError, match="non-decreasing"):
            EvalReport(0.5, np.array([0.9, 0.5]), [0.5], 1, EvalProtocol(max_rank=2))

    def test_report_serialization_keys(self):
        report = EvalReport(0.5, np.array([0.5, 1.0]), [0.5], 1, EvalProtocol(max_rank=2))
        doc = report.to_dict()
        assert set(doc) == {"mAP", "cmc", "per_query_ap", "num_valid_queries", "protocol"}
