import numpy as np
import pytest

from simclust.errors import ValidationError
from simclust.heads import NearestCentroidHead
from simclust.routing import select_cluster, predict_class
from simclust.similarity import CentroidSet, cosine_distance
from simclust.store import ClusterSplit


def orthogonal_clusters(dim=6, per_cluster=2):
    """Two super-clusters hugging orthogonal axes; trivially separable."""
    c0 = {f"a{i}": np.eye(dim)[0] + 0.02 * np.eye(dim)[2] * i for i in range(per_cluster)}
    c1 = {f"b{i}": np.eye(dim)[1] + 0.02 * np.eye(dim)[3] * i for i in range(per_cluster)}
    return {0: CentroidSet(dim, c0), 1: CentroidSet(dim, c1)}


class TestSelectCluster:
    def test_query_at_member_centroid(self):
        clusters = orthogonal_clusters()
        q = np.array(clusters[0].centroids["a1"])
        decision = select_cluster(q, clusters)
        assert decision.chosen_cluster == 0
        # brute-force score oracle
        for cid, cset in clusters.items():
            sims = [
                1.0 - cosine_distance(q, c) for c in cset.centroids.values()
            ]
            assert decision.scores[cid] == pytest.approx(sum(sims) / len(sims), abs=1e-12)

    def test_symmetry_axis_tie_breaks_low(self):
        clusters = {
            0: CentroidSet(2, {"a": np.array([1.0, 0.0])}),
            1: CentroidSet(2, {"b": np.array([0.0, 1.0])}),
        }
        decision = select_cluster(np.array([1.0, 1.0]), clusters)
        assert decision.scores[0] == decision.scores[1]
        assert decision.chosen_cluster == 0

    def test_scores_cover_every_cluster(self):
        clusters = orthogonal_clusters()
        decision = select_cluster(np.array([1.0, 0, 0, 0, 0, 0]), clusters)
        assert set(decision.scores) == {0, 1}

    def test_alpha_7_preserves_decision(self, rng):
        clusters = orthogonal_clusters()
        for _ in range(50):
            q = rng.uniform(0.01, 1.0, 6).astype(np.float32).astype(np.float64)
            base = select_cluster(q, clusters)
            scaled = select_cluster(7.0 * q, clusters)
            assert scaled.chosen_cluster == base.chosen_cluster
            for cid in base.scores:
                assert scaled.scores[cid] == pytest.approx(base.scores[cid], rel=1e-12)

    def test_dyadic_scaling_bitwise_identical(self, rng):
        # power-of-two scaling commutes exactly with every IEEE-754 step of
        # the score computation, so the whole decision must be bit-identical
        clusters = orthogonal_clusters()
        for _ in range(100):
            q = rng.uniform(0.01, 1.0, 6)
            alpha = float(2.0 ** rng.integers(-8, 9))
            base = select_cluster(q, clusters)
            scaled = select_cluster(alpha * q, clusters)
            assert scaled.chosen_cluster == base.chosen_cluster
            assert scaled.scores == base.scores

    def test_sum_mode_biases_to_big_cluster(self):
        # one direction shared by both clusters; the bigger one out-sums it
        big = {f"big{i}": np.array([1.0, 0.0]) for i in range(5)}
        clusters = {
            0: CentroidSet(2, {"small": np.array([1.0, 0.0])}),
            1: CentroidSet(2, big),
        }
        q = np.array([1.0, 0.0])
        assert select_cluster(q, clusters, "mean").chosen_cluster == 0  # tie -> low id
        assert select_cluster(q, clusters, "sum").chosen_cluster == 1

    def test_zero_norm_query(self):
        with pytest.raises(ValidationError, match="zero norm"):
            select_cluster(np.zeros(6), orthogonal_clusters())

    def test_empty_cluster_map(self):
        with pytest.raises(ValidationError, match="no clusters"):
            select_cluster(np.ones(3), {})

    def test_dim_mismatch(self):
        with pytest.raises(ValidationError, match="dim"):
            select_cluster(np.ones(4), orthogonal_clusters(dim=6))

    def test_bad_mode(self):
        with pytest.raises(ValidationError, match="mode"):
            select_cluster(np.ones(6), orthogonal_clusters(), "median")


class TestRoutingConsistency:
    def test_own_centroid_routes_home_on_separated_stores(self):
        # separation is 5x the intra-class sigma: each class's centroid must
        # land in its home cluster in >= 99% of cases (here: all of them)
        from simclust.clustering import cluster_centroid_sets
        from simclust.similarity import build_similarity_matrix
        from simclust.synth import SynthSpec, generate

        total = hits = 0
        for seed in range(10):
            spec = SynthSpec(
                k_super=2, classes_per_super=4, dim=12, n_per_class=15,
                intra_sigma=1.0, class_spread=1.0, super_separation=5.0, seed=seed,
            )
            store, gt = generate(spec)
            centroids, _ = build_similarity_matrix(store)
            split = ClusterSplit(k=2, assignments=gt)
            by_cluster = cluster_centroid_sets(split, centroids)
            for name, c in centroids.centroids.items():
                hits += select_cluster(c, by_cluster).chosen_cluster == gt[name]
                total += 1
        assert hits / total >= 0.99


class CountingHead:
    """Duck-typed head that counts its evaluations."""

    def __init__(self, name):
        self.name = name
        self.calls = 0

    def predict(self, query):
        self.calls += 1
        return self.name


class TestPredictClass:
    def test_routes_then_evaluates_single_head(self):
        clusters = orthogonal_clusters()
        split = ClusterSplit(k=2, assignments={"a0": 0, "a1": 0, "b0": 1, "b1": 1})
        heads = {0: CountingHead("from0"), 1: CountingHead("from1")}
        name, decision = predict_class(
            np.array([0.0, 1.0, 0, 0, 0, 0]), split, clusters, heads
        )
        assert name == "from1"
        assert decision.chosen_cluster == 1
        # feature reuse: exactly one head evaluation, zero elsewhere
        assert heads[1].calls == 1
        assert heads[0].calls == 0

    def test_k1_equals_direct_head(self, rng):
        dim = 4
        cset = CentroidSet(dim, {f"c{i}": rng.uniform(0.1, 1, dim) for i in range(3)})
        head = NearestCentroidHead(cset)
        split = ClusterSplit(k=1, assignments={n: 0 for n in cset.names})
        for _ in range(20):
            q = rng.uniform(0.1, 1.0, dim)
            name, decision = predict_class(q, split, {0: cset}, {0: head})
            assert decision.chosen_cluster == 0
            assert name == head.predict(q)

    def test_missing_head(self):
        clusters = orthogonal_clusters()
        split = ClusterSplit(k=2, assignments={"a0": 0, "a1": 0, "b0": 1, "b1": 1})
        with pytest.raises(ValidationError, match="no head for clusters \\[1\\]"):
            predict_class(np.ones(6), split, clusters, {0: CountingHead("x")})

    def test_zero_query_is_an_error_not_a_prediction(self):
        clusters = orthogonal_clusters()
        split = ClusterSplit(k=2, assignments={"a0": 0, "a1": 0, "b0": 1, "b1": 1})
        heads = {0: CountingHead("x"), 1: CountingHead("y")}
        with pytest.raises(ValidationError, match="zero norm"):
            predict_class(np.zeros(6), split, clusters, heads)
        assert heads[0].calls == heads[1].calls == 0
