import itertools
import math

import numpy as np
import pytest

from pllkit import labels as L


def cartesian(wheel, i):
    theta = math.radians(wheel.angles_deg[i])
    return wheel.radii[i] * math.cos(theta), wheel.radii[i] * math.sin(theta)


class TestWheelGeometry:
    def test_self_distance_zero(self):
        wheel = L.EmotionWheel.default()
        for i in range(wheel.num_classes):
            assert L.emotion_distance(i, i, wheel) == 0.0

    def test_distance_from_center_is_radius(self):
        wheel = L.EmotionWheel.default()
        neutral = wheel.names.index("neutral")
        for i in range(wheel.num_classes):
            assert L.emotion_distance(neutral, i, wheel) == pytest.approx(wheel.radii[i])

    def test_unit_radius_36_degrees_matches_cartesian(self):
        wheel = L.EmotionWheel(names=("a", "b"), radii=(1.0, 1.0), angles_deg=(0.0, 36.0))
        (x0, y0), (x1, y1) = cartesian(wheel, 0), cartesian(wheel, 1)
        expected = math.hypot(x0 - x1, y0 - y1)
        assert L.emotion_distance(0, 1, wheel) == pytest.approx(expected, abs=1e-12)

    def test_all_pairs_match_cartesian_oracle(self):
        wheel = L.EmotionWheel.default()
        for i in range(5):
            for j in range(5):
                (xi, yi), (xj, yj) = cartesian(wheel, i), cartesian(wheel, j)
                expected = math.hypot(xi - xj, yi - yj)
                assert abs(L.emotion_distance(i, j, wheel) - expected) <= 1e-12

    def test_metric_properties_brute_force(self):
        wheel = L.EmotionWheel.default()
        k = wheel.num_classes
        d = [[L.emotion_distance(i, j, wheel) for j in range(k)] for i in range(k)]
        for i, j in itertools.product(range(k), repeat=2):
            assert d[i][j] == pytest.approx(d[j][i], abs=1e-15)
        for i, j, m in itertools.product(range(k), repeat=3):
            assert d[i][j] <= d[i][m] + d[m][j] + 1e-12

    def test_neutral_must_be_centered(self):
        with pytest.raises(L.LabelError):
            L.EmotionWheel(names=("neutral", "x"), radii=(0.5, 1.0), angles_deg=(0.0, 10.0))


class TestSimilarityMatrix:
    def test_diagonal_ones_and_symmetry(self):
        sim = L.build_similarity(L.EmotionWheel.default())
        np.testing.assert_allclose(np.diag(sim), 1.0)
        np.testing.assert_allclose(sim, sim.T, atol=1e-15)

    def test_farthest_pair_scores_exactly_zero(self):
        sim = L.build_similarity(L.EmotionWheel.default())
        assert sim.min() == 0.0
        assert np.all(sim >= 0.0) and np.all(sim <= 1.0)

    def test_matches_pairwise_brute_force(self):
        wheel = L.EmotionWheel.default()
        k = wheel.num_classes
        d = np.array([[L.emotion_distance(i, j, wheel) for j in range(k)] for i in range(k)])
        np.testing.assert_allclose(L.build_similarity(wheel), 1.0 - d / d.max(), atol=1e-15)

    def test_coincident_emotions_rejected(self):
        wheel = L.EmotionWheel(names=("a", "b"), radii=(0.0, 0.0), angles_deg=(0.0, 0.0))
        with pytest.raises(L.LabelError):
            L.build_similarity(wheel)


class TestUniformGenerator:
    def test_q_zero_gives_singleton(self):
        rng = np.random.default_rng(0)
        for y in range(5):
            cand = L.gen_uniform_candidates(y, 0.0, 5, rng)
            assert cand.mask.sum() == 1 and cand.mask[y] == 1

    def test_q_at_least_one_rejected(self):
        with pytest.raises(L.LabelError):
            L.gen_uniform_candidates(0, 1.0, 5, np.random.default_rng(0))

    def test_expected_set_size(self):
        rng = np.random.default_rng(1)
        masks = L.gen_uniform_masks(np.zeros(100_000, dtype=int), 0.8, 5, rng)
        assert abs(masks.sum(axis=1).mean() - 4.2) <= 0.02

    def test_per_class_inclusion_frequency(self):
        rng = np.random.default_rng(2)
        y = 3
        masks = L.gen_uniform_masks(np.full(100_000, y), 0.6, 5, rng)
        freq = masks.mean(axis=0)
        assert freq[y] == 1.0
        for s in range(5):
            if s != y:
                assert abs(freq[s] - 0.6) <= 0.01


class TestSimilarityGenerator:
    def test_truth_always_included(self):
        sim = L.build_similarity(L.EmotionWheel.default())
        rng = np.random.default_rng(3)
        for y in range(5):
            for _ in range(50):
                cand = L.gen_similarity_candidates(y, sim, rng)
                assert cand.mask[y] == 1

    def test_farthest_emotion_never_included(self):
        wheel = L.EmotionWheel.default()
        sim = L.build_similarity(wheel)
        happy, sad = wheel.names.index("happy"), wheel.names.index("sad")
        assert sim[sad, happy] == 0.0
        masks = L.gen_similarity_masks(np.full(20_000, happy), sim, np.random.default_rng(4))
        assert masks[:, sad].sum() == 0

    def test_inclusion_matches_similarity_column(self):
        wheel = L.EmotionWheel.default()
        sim = L.build_similarity(wheel)
        fear = wheel.names.index("fear")
        masks = L.gen_similarity_masks(np.full(100_000, fear), sim, np.random.default_rng(5))
        freq = masks.mean(axis=0)
        for s in range(5):
            expected = 1.0 if s == fear else sim[s, fear]
            assert abs(freq[s] - expected) <= 0.01


class TestUniformize:
    def test_singleton_is_onehot(self):
        np.testing.assert_array_equal(L.uniformize([0, 0, 1, 0, 0]), [0, 0, 1, 0, 0])

    def test_full_set(self):
        np.testing.assert_allclose(L.uniformize(np.ones(5)), np.full(5, 0.2))

    def test_partial_set(self):
        out = L.uniformize([1, 0, 1, 1, 0])
        np.testing.assert_allclose(out, [1 / 3, 0, 1 / 3, 1 / 3, 0])
        assert out.sum() == pytest.approx(1.0, abs=1e-9)

    def test_empty_rejected(self):
        with pytest.raises(L.LabelError):
            L.uniformize(np.zeros(5))

    def test_generated_sets_uniformize_cleanly(self):
        rng = np.random.default_rng(6)
        for _ in range(200):
            y = int(rng.integers(5))
            cand = L.gen_uniform_candidates(y, 0.7, 5, rng)
            dist = cand.uniform
            assert dist.sum() == pytest.approx(1.0, abs=1e-9)
            assert np.array_equal(dist > 0, cand.mask.astype(bool))


class TestCandidateFile:
    def test_round_trip(self, tmp_path):
        sets = L.generate_for_labels(np.array([0, 3, 4, 1]), "uniform", q=0.6, seed=9)
        path = tmp_path / "labels.csv"
        L.save_candidate_file(path, sets)
        loaded = L.load_candidate_file(path)
        assert len(loaded) == 4
        for a, b in zip(sets, loaded):
            assert np.array_equal(a.mask, b.mask)
            assert a.truth == b.truth and a.provenance == b.provenance

    def test_provenance_tags(self):
        uni = L.generate_for_labels(np.array([1]), "uniform", q=0.2, seed=0)[0]
        assert uni.provenance == "uniform:q=0.2"
        sim = L.generate_for_labels(np.array([1]), "similarity", seed=0)[0]
        assert sim.provenance == f"similarity:wheel={L.EmotionWheel.default().tag}"

    def test_malformed_row_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("sample,truth,c0,c1,c2,c3,c4,provenance\n0,1,1,0,0,0,provenance\n")
        with pytest.raises(L.LabelError):
            L.load_candidate_file(path)

    def test_wheel_json_round_trip(self, tmp_path):
        wheel = L.EmotionWheel.default()
        path = tmp_path / "wheel.json"
        wheel.to_json(path)
        loaded = L.EmotionWheel.from_json(path)
        assert loaded == wheel
        assert loaded.tag == wheel.tag
