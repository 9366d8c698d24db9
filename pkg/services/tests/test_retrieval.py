"""
Tests for prefix-similarity retrieval.
"""

import numpy as np
from django.test import SimpleTestCase

from services.exceptions import GameDomainError
from services.game_core import PRISONERS_DILEMMA, GameRecord
from services.history_memory import CurrentHistory, PastMemory
from services.retrieval import prefix_similarity, rank_similar, scan_top_k, top_k_similar


def record(learner, opponent, opponent_id='scripted'):
    return GameRecord.from_actions(PRISONERS_DILEMMA, learner, opponent, opponent_id=opponent_id)


class PrefixSimilarityTest(SimpleTestCase):

    def test_joint_match_rate(self):
        c = CurrentHistory.from_pairs([(0, 0), (0, 1), (1, 1)])
        rec = record([0, 1, 1, 0], [0, 1, 0, 0])
        score = prefix_similarity(c, rec)
        # turn 2 matches only on the opponent side, turn 3 only on the learner side
        self.assertEqual(score.matches, 1)
        self.assertAlmostEqual(score.value, 1 / 3)

    def test_empty_history(self):
        with self.assertRaises(GameDomainError):
            prefix_similarity(CurrentHistory(), record([0, 0], [0, 0]))


class RankSimilarTest(SimpleTestCase):

    def test_ordering_rules(self):
        memory = PastMemory(capacity=10)
        memory.insert_with_eviction(record([0, 0, 0], [0, 0, 0], 'same_low'))
        memory.insert_with_eviction(record([0, 0, 1], [0, 0, 0], 'same_high'))
        memory.insert_with_eviction(record([0, 0], [0, 0], 'too_short'))
        memory.insert_with_eviction(record([1, 1, 1], [1, 1, 1], 'different'))
        memory.insert_with_eviction(record([0, 0, 0], [0, 0, 0], 'same_low_newer'))

        c = CurrentHistory.from_pairs([(0, 0), (0, 0)])
        ranked = [memory[s.record_ref].opponent_id for s in rank_similar(c, memory, k=10)]
        self.assertEqual(ranked, ['same_high', 'same_low', 'same_low_newer', 'different'])
        self.assertEqual([r.opponent_id for r in top_k_similar(c, memory, k=2)], ['same_high', 'same_low'])

    def test_exclude_and_argument_checks(self):
        memory = PastMemory(capacity=10)
        memory.insert_with_eviction(record([0, 0, 0], [0, 0, 0]))
        memory.insert_with_eviction(record([1, 0, 0], [0, 0, 0]))
        c = CurrentHistory.from_pairs([(0, 0)])
        self.assertEqual([s.record_ref for s in rank_similar(c, memory, k=5, exclude=0)], [1])
        self.assertEqual(rank_similar(c, PastMemory(capacity=3), k=5), [])
        with self.assertRaises(GameDomainError):
            rank_similar(CurrentHistory(), memory, k=5)
        with self.assertRaises(GameDomainError):
            rank_similar(c, memory, k=0)

    def test_vectorised_matches_exhaustive_scan(self):
        rng = np.random.default_rng(21)
        for trial in range(200):
            memory = PastMemory(capacity=int(rng.integers(1, 40)))
            for _ in range(int(rng.integers(1, 60))):
                n = int(rng.integers(1, 10))
                memory.insert_with_eviction(
                    record(rng.integers(0, 2, n).tolist(), rng.integers(0, 2, n).tolist())
                )
            m = int(rng.integers(1, 8))
            c = CurrentHistory.from_pairs(zip(rng.integers(0, 2, m).tolist(), rng.integers(0, 2, m).tolist()))
            k = int(rng.integers(1, 8))
            exclude = int(rng.integers(0, len(memory))) if trial % 3 == 0 else None
            with self.subTest(trial=trial):
                self.assertEqual(rank_similar(c, memory, k, exclude), scan_top_k(c, memory, k, exclude))
