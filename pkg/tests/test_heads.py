import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from simclust.errors import ValidationError
from simclust.heads import (
    LinearHead,
    NearestCentroidHead,
    TrainConfig,
    ce_loss_and_grads,
    fit_head,
    linear_predict,
    load_head,
    nc_predict,
    save_head,
    train_linear_head,
)
from simclust.similarity import CentroidSet, cosine_distance
from simclust.store import ClassEmbeddings


def gaussian_two_class(rng, mean=5.0, sigma=0.5, n=50):
    a = rng.normal([+mean, 0.0], sigma, (n, 2)).astype(np.float32)
    b = rng.normal([-mean, 0.0], sigma, (n, 2)).astype(np.float32)
    return [ClassEmbeddings("pos", a), ClassEmbeddings("neg", b)]


class TestNearestCentroid:
    def _head(self):
        return NearestCentroidHead(
            CentroidSet(2, {"first": [1.0, 0.0], "second": [0.0, 1.0]})
        )

    def test_centroid_query_returns_class(self):
        assert nc_predict(self._head(), np.array([0.0, 1.0])) == "second"

    def test_nearer_direction_wins(self):
        assert nc_predict(self._head(), np.array([0.9, 0.1])) == "first"

    def test_tie_keeps_first_class(self):
        assert nc_predict(self._head(), np.array([1.0, 1.0])) == "first"

    def test_matches_exhaustive_scan(self, rng):
        cset = CentroidSet(5, {f"c{i}": rng.uniform(0.1, 1, 5) for i in range(6)})
        head = NearestCentroidHead(cset)
        for _ in range(50):
            q = rng.uniform(0.1, 1.0, 5)
            dists = {n: cosine_distance(q, c) for n, c in cset.centroids.items()}
            assert nc_predict(head, q) == min(dists, key=dists.get)

    def test_zero_query_rejected(self):
        with pytest.raises(ValidationError, match="zero-norm"):
            nc_predict(self._head(), np.zeros(2))


class TestLinearPredict:
    def test_zero_head_uniform(self):
        head = LinearHead(["a", "b", "c", "d"], np.zeros((4, 3)), np.zeros(4))
        name, probs = linear_predict(head, np.array([1.0, 2.0, 3.0]))
        assert name == "a"
        assert np.allclose(probs, 0.25, atol=1e-15)

    def test_dominating_logit(self):
        head = LinearHead(["a", "b", "c"], np.zeros((3, 2)), np.array([10.0, 0.0, 0.0]))
        name, probs = linear_predict(head, np.ones(2))
        assert name == "a"
        assert probs[0] > 0.9999

    def test_matches_bruteforce_softmax(self, rng):
        head = LinearHead(
            ["a", "b", "c"], rng.standard_normal((3, 4)), rng.standard_normal(3)
        )
        for _ in range(20):
            q = rng.standard_normal(4)
            _, probs = linear_predict(head, q)
            logits = head.W @ q + head.b
            brute = [math.exp(z) for z in logits - logits.max()]
            brute = np.array(brute) / sum(brute)
            assert np.max(np.abs(probs - brute)) <= 1e-12

    def test_probabilities_sum_to_one(self, rng):
        head = LinearHead(["a", "b"], rng.standard_normal((2, 3)) * 30, rng.standard_normal(2))
        for _ in range(50):
            _, probs = linear_predict(head, rng.standard_normal(3))
            assert abs(probs.sum() - 1.0) <= 1e-9

    def test_logit_shift_invariance(self, rng):
        W = rng.standard_normal((3, 4))
        b = rng.standard_normal(3)
        q = rng.standard_normal(4)
        _, probs = linear_predict(LinearHead(["a", "b", "c"], W, b), q)
        _, shifted = linear_predict(LinearHead(["a", "b", "c"], W, b + 123.456), q)
        assert np.max(np.abs(probs - shifted)) <= 1e-12

    def test_dim_mismatch(self):
        head = LinearHead(["a", "b"], np.zeros((2, 3)), np.zeros(2))
        with pytest.raises(ValidationError, match="shape"):
            linear_predict(head, np.ones(4))

    @settings(max_examples=60, deadline=None)
    @given(
        st.lists(
            st.lists(st.floats(-50, 50), min_size=3, max_size=3),
            min_size=2, max_size=5,
        ),
        st.lists(st.floats(-50, 50), min_size=3, max_size=3),
    )
    def test_softmax_properties(self, rows, query):
        # sums to 1 within 1e-9 and is invariant to shifting every logit
        C = len(rows)
        head = LinearHead([f"c{i}" for i in range(C)], np.array(rows), np.zeros(C))
        name, probs = linear_predict(head, np.array(query))
        assert abs(probs.sum() - 1.0) <= 1e-9
        assert (probs >= 0).all()
        shifted_head = LinearHead(head.classes, head.W, head.b + 42.0)
        shifted_name, shifted_probs = linear_predict(shifted_head, np.array(query))
        assert shifted_name == name
        assert np.max(np.abs(shifted_probs - probs)) <= 1e-9


class TestTraining:
    def test_initial_loss_is_ln_c(self, rng):
        for n_classes in (2, 3, 7):
            data = [
                ClassEmbeddings(f"c{i}", rng.uniform(0.1, 1, (5, 4)).astype(np.float32))
                for i in range(n_classes)
            ]
            head = train_linear_head(data, TrainConfig(epochs=1))
            assert head.loss_history[0] == pytest.approx(math.log(n_classes), abs=1e-9)

    def test_separable_reaches_100_percent(self, rng):
        data = gaussian_two_class(rng)
        head = train_linear_head(data, TrainConfig(epochs=200, lr0=0.1))
        correct = 0
        total = 0
        for c in data:
            for v in c.vectors:
                correct += head.predict(v.astype(np.float64)) == c.class_name
                total += 1
        assert correct == total

    def test_final_loss_not_above_initial(self, rng):
        data = gaussian_two_class(rng, mean=1.0, sigma=1.0)
        head = train_linear_head(data, TrainConfig(epochs=50, lr0=0.05))
        assert head.loss_history[-1] <= head.loss_history[0]

    def test_monotone_loss_small_lr(self, rng):
        # standardized columns, tiny step: full-batch GD on a convex loss
        # must descend every epoch
        raw = [
            ClassEmbeddings("a", rng.normal(1.0, 1.0, (30, 3)).astype(np.float32)),
            ClassEmbeddings("b", rng.normal(-1.0, 1.0, (30, 3)).astype(np.float32)),
        ]
        stacked = np.concatenate([c.vectors for c in raw]).astype(np.float64)
        mu, sd = stacked.mean(axis=0), stacked.std(axis=0)
        data = [
            ClassEmbeddings(c.class_name, ((c.vectors - mu) / sd).astype(np.float32))
            for c in raw
        ]
        head = train_linear_head(data, TrainConfig(epochs=100, lr0=1e-3))
        diffs = np.diff(head.loss_history)
        assert np.all(diffs <= 0)

    def test_step_schedule_exact(self):
        cfg = TrainConfig(epochs=100, lr0=0.5, step_size=7, gamma=0.25)
        for e in range(100):
            assert cfg.lr_at(e) == 0.5 * 0.25 ** (e // 7)

    def test_deterministic(self, rng):
        data = gaussian_two_class(rng, n=20)
        h1 = train_linear_head(data, TrainConfig(epochs=30))
        h2 = train_linear_head(data, TrainConfig(epochs=30))
        assert np.array_equal(h1.W, h2.W) and np.array_equal(h1.b, h2.b)

    def test_single_class_rejected(self, rng):
        data = [ClassEmbeddings("only", rng.uniform(0.1, 1, (5, 3)).astype(np.float32))]
        with pytest.raises(ValidationError, match="2 classes"):
            train_linear_head(data, TrainConfig())

    def test_divergence_aborts_with_diagnostic(self, rng):
        # the log-sum-exp loss itself cannot overflow, but an absurd step
        # overflows the weights and the NaN guard must trip
        data = gaussian_two_class(rng, mean=50.0, sigma=0.1)
        with pytest.raises(ValidationError, match="epoch"):
            train_linear_head(data, TrainConfig(epochs=5, lr0=1e308))

    def test_l2_shrinks_weights(self, rng):
        data = gaussian_two_class(rng)
        free = train_linear_head(data, TrainConfig(epochs=100))
        ridge = train_linear_head(data, TrainConfig(epochs=100, l2=0.1))
        assert np.linalg.norm(ridge.W) < np.linalg.norm(free.W)

    def test_gradients_match_central_differences(self, rng):
        X = rng.standard_normal((12, 4))
        y = rng.integers(0, 3, 12)
        W = rng.standard_normal((3, 4)) * 0.5
        b = rng.standard_normal(3) * 0.5
        _, gW, gb = ce_loss_and_grads(W, b, X, y)
        h = 1e-5
        fd_W = np.zeros_like(W)
        for i in range(3):
            for j in range(4):
                Wp, Wm = W.copy(), W.copy()
                Wp[i, j] += h
                Wm[i, j] -= h
                fd_W[i, j] = (
                    ce_loss_and_grads(Wp, b, X, y)[0] - ce_loss_and_grads(Wm, b, X, y)[0]
                ) / (2 * h)
        fd_b = np.zeros_like(b)
        for i in range(3):
            bp, bm = b.copy(), b.copy()
            bp[i] += h
            bm[i] -= h
            fd_b[i] = (
                ce_loss_and_grads(W, bp, X, y)[0] - ce_loss_and_grads(W, bm, X, y)[0]
            ) / (2 * h)
        rel_W = np.max(np.abs(gW - fd_W)) / np.max(np.abs(fd_W))
        rel_b = np.max(np.abs(gb - fd_b)) / max(np.max(np.abs(fd_b)), 1e-12)
        assert rel_W < 1e-4 and rel_b < 1e-4


class TestHeadFiles:
    def test_linear_round_trip_exact(self, tmp_path, rng):
        data = gaussian_two_class(rng, n=10)
        head = train_linear_head(data, TrainConfig(epochs=20, lr0=0.2, l2=0.01))
        save_head(head, tmp_path / "h.json")
        loaded = load_head(tmp_path / "h.json")
        assert isinstance(loaded, LinearHead)
        assert loaded.classes == head.classes
        assert np.array_equal(loaded.W, head.W)
        assert np.array_equal(loaded.b, head.b)
        assert loaded.trained_epochs == 20
        assert loaded.config == head.config

    def test_nearest_centroid_round_trip(self, tmp_path):
        head = fit_head(
            "nearest_centroid",
            [
                ClassEmbeddings("a", np.array([[1, 0], [3, 0]], np.float32)),
                ClassEmbeddings("b", np.array([[0, 2]], np.float32)),
            ],
        )
        save_head(head, tmp_path / "h.json")
        loaded = load_head(tmp_path / "h.json")
        assert isinstance(loaded, NearestCentroidHead)
        assert loaded.classes == ["a", "b"]
        assert np.array_equal(loaded.centroids.centroids["a"], [2.0, 0.0])

    def test_save_is_deterministic(self, tmp_path, rng):
        data = gaussian_two_class(rng, n=10)
        head = train_linear_head(data, TrainConfig(epochs=5))
        save_head(head, tmp_path / "a.json")
        save_head(head, tmp_path / "b.json")
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()

    def test_unknown_kind_rejected(self, rng):
        with pytest.raises(ValidationError, match="head kind"):
            fit_head("midpoint", [], None)
