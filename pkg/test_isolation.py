#!/usr/bin/env python3
"""
Isolation test suite
Random and weighted random isolation, the Beta-key law, the enumeration
oracle and candidate weights.
"""

import os
import sys
import unittest
from collections import Counter

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from src.assignment import cluster_complete_randomization, exposure_violations
from src.generators import MODELS, generate
from src.graph import DirectedGraph
from src.isolation import (
    DEFAULT_CANDIDATES,
    EnumerationTooLargeError,
    InvalidWeightError,
    WeightVector,
    beta_key_law_check,
    beta_max_samples,
    candidate_weights,
    check_isolation,
    empirical_inclusion,
    inclusion_probabilities,
    isolated_set_distribution,
    parse_candidate,
    random_isolation,
    resolve_weights,
    weighted_random_isolation,
    weights_from_csv,
    weights_to_csv,
)

SLOW = os.getenv("NETEXP_SLOW_TESTS") == "1"

P5_SETS = [frozenset({0, 3}), frozenset({0, 4}), frozenset({1, 4}), frozenset({2})]
UNIFORM_LAW = [0.3, 0.2, 0.3, 0.2]
INVERSE_DEGREE_LAW = [5 / 21, 8 / 21, 5 / 21, 3 / 21]


def path_graph(n: int) -> DirectedGraph:
    return DirectedGraph.from_undirected(n, [(i, i + 1) for i in range(n - 1)])


@st.composite
def weighted_graphs(draw, max_n: int = 14):
    n = draw(st.integers(min_value=1, max_value=max_n))
    pairs = draw(st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)), max_size=3 * n))
    directed = draw(st.booleans())
    pairs = [(i, j) for i, j in pairs if i != j]
    g = DirectedGraph(n, pairs) if directed else DirectedGraph.from_undirected(n, pairs)
    weights = draw(st.lists(st.floats(min_value=1e-3, max_value=1e3), min_size=n, max_size=n))
    return g, WeightVector(np.array(weights))


class TestRandomIsolation(unittest.TestCase):
    """Uniform random isolation"""

    def test_p5_distribution(self):
        g = path_graph(5)
        rng = np.random.default_rng(101)
        counts = Counter(random_isolation(g, rng).as_set() for _ in range(100_000))
        self.assertEqual(set(counts), set(P5_SETS))
        observed = [counts[s] for s in P5_SETS]
        result = stats.chisquare(observed, np.array(UNIFORM_LAW) * 100_000)
        self.assertGreater(result.pvalue, 0.001)

    def test_edgeless_graph_isolates_everyone(self):
        s = random_isolation(DirectedGraph(7), 3)
        self.assertEqual(sorted(s.members), list(range(7)))

    def test_complete_graph_single_unit(self):
        g = DirectedGraph.from_undirected(6, [(i, j) for i in range(6) for j in range(i + 1, 6)])
        self.assertEqual(len(random_isolation(g, 5)), 1)

    def test_seed_recorded_and_deterministic(self):
        g = generate("BA", 100, seed=1)
        first, second = random_isolation(g, 42), random_isolation(g, 42)
        self.assertEqual(first.members, second.members)
        self.assertEqual(first.source_seed, 42)

    def test_empty_graph_rejected(self):
        with self.assertRaises(ValueError):
            random_isolation(DirectedGraph(0), 0)


class TestWeightedRandomIsolation(unittest.TestCase):
    """Weighted random isolation and its enumeration oracle"""

    def setUp(self):
        self.p5 = path_graph(5)

    def test_oracle_uniform(self):
        law = isolated_set_distribution(self.p5)
        for members, expected in zip(P5_SETS, UNIFORM_LAW):
            self.assertAlmostEqual(law[members], expected, places=12)
        self.assertAlmostEqual(sum(law.values()), 1.0, places=12)

    def test_oracle_inverse_degree(self):
        law = isolated_set_distribution(self.p5, candidate_weights(self.p5, "degree", -1))
        for members, expected in zip(P5_SETS, INVERSE_DEGREE_LAW):
            self.assertAlmostEqual(law[members], expected, places=12)

    def test_empirical_matches_oracle(self):
        for weights, expected in ((WeightVector.uniform(5), UNIFORM_LAW),
                                  (candidate_weights(self.p5, "degree", -1), INVERSE_DEGREE_LAW)):
            rng = np.random.default_rng(7)
            counts = Counter(weighted_random_isolation(self.p5, weights, rng).as_set() for _ in range(100_000))
            observed = [counts[s] for s in P5_SETS]
            self.assertEqual(sum(observed), 100_000)
            result = stats.chisquare(observed, np.array(expected) * 100_000)
            self.assertGreater(result.pvalue, 0.001, weights.label)

    def test_oracle_size_limit(self):
        with self.assertRaises(EnumerationTooLargeError):
            isolated_set_distribution(path_graph(13))

    def test_dominant_weight_always_selected(self):
        g = generate("BA", 50, seed=3)
        values = np.ones(50)
        values[0] = 1e6
        weights = WeightVector(values)
        rng = np.random.default_rng(11)
        hits = sum(0 in weighted_random_isolation(g, weights, rng) for _ in range(10_000))
        self.assertGreater(hits / 10_000, 0.999)

    def test_scale_invariance_with_common_seed(self):
        g = generate("ER", 80, seed=2)
        weights = candidate_weights(g, "degree", 2)
        for seed in range(20):
            self.assertEqual(weighted_random_isolation(g, weights, seed).members,
                             weighted_random_isolation(g, weights.scaled(7.5), seed).members)

    def test_determinism(self):
        g = generate("SW", 120, seed=5)
        weights = candidate_weights(g, "spectral", 1)
        self.assertEqual(weighted_random_isolation(g, weights, 9).members,
                         weighted_random_isolation(g, weights, 9).members)

    def test_weight_length_checked(self):
        with self.assertRaises(InvalidWeightError):
            weighted_random_isolation(self.p5, WeightVector.uniform(4), 0)

    def test_inclusion_probabilities(self):
        np.testing.assert_allclose(inclusion_probabilities(self.p5), [0.5, 0.3, 0.2, 0.3, 0.5], atol=1e-12)
        empirical = empirical_inclusion(self.p5, WeightVector.uniform(5), 5000, 3)
        np.testing.assert_allclose(empirical, [0.5, 0.3, 0.2, 0.3, 0.5], atol=0.03)

    @given(weighted_graphs())
    @settings(max_examples=80, deadline=None)
    def test_isolation_invariants(self, case):
        g, weights = case
        for seed in range(3):
            self.assertEqual(check_isolation(g, weighted_random_isolation(g, weights, seed)), [])
            self.assertEqual(check_isolation(g, random_isolation(g, seed)), [])

    def test_invariants_across_network_families(self):
        draws = 2000 if SLOW else 40
        for model in MODELS:
            g = generate(model, 300, seed=17)
            weights = candidate_weights(g, "degree", 1)
            rng = np.random.default_rng(23)
            for _ in range(draws):
                s = weighted_random_isolation(g, weights, rng)
                self.assertEqual(check_isolation(g, s), [], model)
                if len(s) >= 2:
                    assignment = cluster_complete_randomization(g, s, rng)
                    self.assertEqual(exposure_violations(g, assignment), [], model)


class TestBetaKeys(unittest.TestCase):
    """Selection law of Beta(w, 1) keys"""

    def test_pairwise_win_probability(self):
        n_samples = 100_000
        for w_i, w_j in ((1, 1), (2, 1), (5, 3)):
            expected = w_i / (w_i + w_j)
            empirical = beta_key_law_check(w_i, w_j, n_samples, 2024)
            tolerance = 4 * np.sqrt(expected * (1 - expected) / n_samples)
            self.assertLessEqual(abs(empirical - expected), tolerance, (w_i, w_j))

    def test_max_key_distribution(self):
        for w_i, w_j in ((3, 1), (2, 1), (5, 3)):
            samples = beta_max_samples(w_i, w_j, 100_000, 77)
            result = stats.kstest(samples, stats.beta(w_i + w_j, 1).cdf)
            self.assertGreater(result.pvalue, 0.01, (w_i, w_j))

    def test_positive_weights_required(self):
        with self.assertRaises(InvalidWeightError):
            beta_key_law_check(0, 1, 10, 0)


class TestCandidateWeights(unittest.TestCase):
    """degree^l and spectral^l families"""

    def setUp(self):
        self.p5 = path_graph(5)

    def test_degree_family(self):
        np.testing.assert_array_equal(candidate_weights(self.p5, "degree", 0).w, np.ones(5))
        np.testing.assert_array_equal(candidate_weights(self.p5, "degree", 1).w, [1, 2, 2, 2, 1])
        np.testing.assert_allclose(candidate_weights(self.p5, "degree", -1).w, [1, 0.5, 0.5, 0.5, 1])

    def test_spectral_floor_on_reducible_squared_path(self):
        forward = candidate_weights(self.p5, "spectral", 1).w
        np.testing.assert_allclose(forward[[0, 2, 4]], [0.5, 1 / np.sqrt(2), 0.5], atol=1e-8)
        np.testing.assert_array_equal(forward[[1, 3]], [1e-12, 1e-12])
        inverse = candidate_weights(self.p5, "spectral", -1).w
        np.testing.assert_allclose(inverse[[1, 3]], [1e12, 1e12], rtol=1e-12)

    def test_zero_degree_floor(self):
        g = DirectedGraph.from_undirected(3, [(0, 1)])
        np.testing.assert_array_equal(candidate_weights(g, "degree", -1).w, [1, 1, 1])

    def test_spectral_family(self):
        g = generate("BA", 200, seed=8)
        uniform = candidate_weights(g, "spectral", 0)
        np.testing.assert_array_equal(uniform.w, np.ones(200))
        for exponent in (-1, 1, 4):
            w = candidate_weights(g, "spectral", exponent).w
            self.assertTrue(np.all(np.isfinite(w)) and np.all(w >= 1e-12))
        rank = stats.spearmanr(candidate_weights(g, "spectral", 1).w, g.in_degree)
        self.assertGreater(rank.correlation, 0.5)

    def test_candidate_ids(self):
        self.assertEqual(parse_candidate("degree^-1"), ("degree", -1))
        self.assertEqual(parse_candidate("spectral^4"), ("spectral", 4))
        self.assertEqual(len(DEFAULT_CANDIDATES), 12)
        self.assertEqual(resolve_weights(self.p5, "degree^1").label, "degree^1")
        with self.assertRaises(InvalidWeightError):
            parse_candidate("pagerank^1")

    def test_weight_vector_validation(self):
        with self.assertRaises(InvalidWeightError):
            WeightVector(np.array([1.0, -1.0]))
        with self.assertRaises(InvalidWeightError):
            WeightVector(np.array([1.0, np.inf]))
        self.assertEqual(WeightVector(np.zeros(3)).w.min(), 1e-12)

    def test_weights_csv(self):
        weights = candidate_weights(self.p5, "degree", -1)
        restored = weights_from_csv(weights_to_csv(weights))
        np.testing.assert_array_equal(restored.w, weights.w)
        with self.assertRaises(InvalidWeightError):
            weights_from_csv("unit,weight\n0,1\n0,2\n")


def main():
    """Run the isolation test suite"""
    print("Isolation Test Suite")
    print("=" * 50)
    test_loader = unittest.TestLoader()
    test_suite = unittest.TestSuite()
    for test_class in [TestRandomIsolation, TestWeightedRandomIsolation, TestBetaKeys, TestCandidateWeights]:
        test_suite.addTests(test_loader.loadTestsFromTestCase(test_class))
    result = unittest.TextTestRunner(verbosity=2).run(test_suite)
    return 0 if result.wasSuccessful() else 1


if __name__ == "__main__":
    sys.exit(main())
