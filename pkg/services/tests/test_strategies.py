"""
Tests for the opponent strategy catalog and pools.
"""

import tempfile
from collections import Counter
from pathlib import Path

import numpy as np
import yaml
from django.test import SimpleTestCase

from services.exceptions import ConfigurationError, GameDomainError
from services.game_core import CHICKEN, PRISONERS_DILEMMA, GameConfig, HistoryView, play_repeated_game
from services.strategies import (
    CATALOG,
    DEFAULT_POOL,
    DEFECT,
    StrategyPool,
    get_strategy,
    load_pool,
    sample_opponent,
    strategy_step,
)

FIXTURE = Path(__file__).resolve().parent.parent / 'fixtures' / 'strategy_openings.yaml'


def opening(row_id, col_id, turns=10, matrix=PRISONERS_DILEMMA):
    cfg = GameConfig(game_name=matrix.game_name, turns=turns)
    record = play_repeated_game(cfg, get_strategy(row_id).player(), get_strategy(col_id).player(), matrix=matrix)
    return ''.join('CD'[a] for a in record.learner_actions)


class StrategyCatalogTest(SimpleTestCase):

    def test_catalog_is_complete(self):
        self.assertEqual(len(CATALOG), 12)
        self.assertEqual(set(DEFAULT_POOL.old) | set(DEFAULT_POOL.new), set(CATALOG))

    def test_openings_match_fixture(self):
        with open(FIXTURE, encoding='utf-8') as fh:
            expected = yaml.safe_load(fh)
        for row_id, scripted in expected.items():
            for col_id, moves in scripted.items():
                with self.subTest(strategy=row_id, against=col_id):
                    self.assertEqual(opening(row_id, col_id), moves)

    def test_strategies_run_unchanged_on_chicken(self):
        self.assertEqual(opening('tit_for_tat', 'alternator', matrix=CHICKEN), 'CCDCDCDCDC')

    def test_unknown_strategy(self):
        with self.assertRaises(ConfigurationError):
            get_strategy('tit_for_three_tats')

    def test_random_is_reproducible_and_balanced(self):
        first = opening('random', 'cooperator', turns=50)
        second = opening('random', 'cooperator', turns=50)
        self.assertEqual(first, second)

        rng = np.random.default_rng(7)
        player = get_strategy('random').player(rng=rng)
        moves = Counter(player(HistoryView()) for _ in range(4000))
        self.assertAlmostEqual(moves[DEFECT] / 4000, 0.5, delta=0.05)

    def test_step_returns_matrix_action(self):
        action, state = strategy_step(get_strategy('grudger'), HistoryView(own=(0,), other=(1,)), False,
                                      np.random.default_rng(0), matrix=PRISONERS_DILEMMA)
        self.assertEqual(action.label, 'D')
        self.assertTrue(state)

    def test_hard_tit_for_two_tats_looks_at_last_three_moves(self):
        strategy = get_strategy('hard_tit_for_two_tats')
        rng = np.random.default_rng(0)
        cases = {
            (): 0,
            (1,): 0,
            (1, 1): 1,
            (1, 0, 1): 0,
            (1, 1, 0): 1,
            (0, 1, 1): 1,
            (1, 1, 0, 0): 0,
            (1, 1, 0, 1): 0,
            (0, 1, 1, 0, 0): 0,
            (0, 0, 0, 1, 1): 1,
        }
        for other, expected in cases.items():
            own = (0,) * len(other)
            with self.subTest(other=other):
                self.assertEqual(strategy.step(own, other, strategy.initial_state(), rng)[0], expected)

    def test_step_rejects_uneven_history(self):
        with self.assertRaises(GameDomainError):
            strategy_step(get_strategy('tit_for_tat'), HistoryView(own=(0, 0), other=(1,)), None,
                          np.random.default_rng(0))

    def test_player_state_is_per_game(self):
        strategy = get_strategy('grudger')
        cfg = GameConfig(game_name='prisoners_dilemma', turns=5)
        play_repeated_game(cfg, strategy.player(), get_strategy('defector').player())
        record = play_repeated_game(cfg, strategy.player(), get_strategy('cooperator').player())
        self.assertEqual(record.learner_actions, (0, 0, 0, 0, 0))


class StrategyPoolTest(SimpleTestCase):

    def test_overlap_rejected(self):
        with self.assertRaises(ConfigurationError):
            StrategyPool(old=('cooperator', 'defector'), new=('defector',))

    def test_unknown_member_rejected(self):
        with self.assertRaises(ConfigurationError):
            StrategyPool(old=('cooperator',), new=('nobody',))

    def test_empty_pool_fails_validation(self):
        with self.assertRaises(ConfigurationError):
            StrategyPool(old=('cooperator',), new=()).validate()

    def test_members_selector(self):
        self.assertEqual(DEFAULT_POOL.members('new'), DEFAULT_POOL.new)
        with self.assertRaises(GameDomainError):
            DEFAULT_POOL.members('all')

    def test_sample_opponent_stays_in_sub_pool(self):
        rng = np.random.default_rng(3)
        drawn = {sample_opponent(DEFAULT_POOL, 'old', rng).id for _ in range(500)}
        self.assertEqual(drawn, set(DEFAULT_POOL.old))

    def test_load_pool(self):
        self.assertIs(load_pool(None), DEFAULT_POOL)
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'pool.yaml'
            path.write_text("old: [cooperator, defector]\nnew: [tit_for_tat]\n", encoding='utf-8')
            pool = load_pool(path)
        self.assertEqual(pool.as_dict(), {'old': ['cooperator', 'defector'], 'new': ['tit_for_tat']})

    def test_sampling_is_uniform(self):
        pool = StrategyPool(old=('cooperator', 'defector', 'grudger', 'alternator'), new=())
        rng = np.random.default_rng(12)
        counts = Counter(sample_opponent(pool, 'old', rng).id for _ in range(10000))
        sigma = (10000 * 0.25 * 0.75) ** 0.5
        for strategy_id in pool.old:
            self.assertLess(abs(counts[strategy_id] - 2500), 3 * sigma)

    def test_singleton_and_empty_sub_pools(self):
        pool = StrategyPool(old=('grudger',), new=())
        self.assertEqual(sample_opponent(pool, 'old', np.random.default_rng(0)).id, 'grudger')
        with self.assertRaises(GameDomainError):
            sample_opponent(pool, 'new', np.random.default_rng(0))
