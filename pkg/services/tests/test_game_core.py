"""
Tests for the stage-game and repeated-game engine.
"""

import itertools
import math
import tempfile
from pathlib import Path

from django.test import SimpleTestCase

from services.exceptions import GameDomainError, ProtocolError
from services.game_core import (
    CHICKEN,
    PRISONERS_DILEMMA,
    GameConfig,
    GameRecord,
    HistoryView,
    average_reward,
    get_game,
    load_game,
    payoff_lookup,
    play_repeated_game,
    play_stage,
    resolve_game,
    score_difference,
)
from services.strategies import get_strategy

DETERMINISTIC = ['cooperator', 'defector', 'tit_for_tat', 'grudger', 'alternator', 'win_stay_lose_shift']


def brute_force_delta(row_id, col_id, turns=50):
    """Independent re-implementation of the six deterministic strategies and PD scoring."""
    payoffs = {('C', 'C'): (3, 3), ('C', 'D'): (0, 5), ('D', 'C'): (5, 0), ('D', 'D'): (1, 1)}

    def move(strategy, mine, theirs):
        if strategy == 'cooperator':
            return 'C'
        if strategy == 'defector':
            return 'D'
        if strategy == 'tit_for_tat':
            return theirs[-1] if theirs else 'C'
        if strategy == 'grudger':
            return 'D' if 'D' in theirs else 'C'
        if strategy == 'alternator':
            return 'C' if len(mine) % 2 == 0 else 'D'
        if strategy == 'win_stay_lose_shift':
            if not mine:
                return 'C'
            return 'C' if mine[-1] == theirs[-1] else 'D'
        raise AssertionError(strategy)

    row_moves, col_moves, row_rewards, col_rewards = [], [], [], []
    for _ in range(turns):
        a = move(row_id, row_moves, col_moves)
        b = move(col_id, col_moves, row_moves)
        row_moves.append(a)
        col_moves.append(b)
        r_row, r_col = payoffs[(a, b)]
        row_rewards.append(float(r_row))
        col_rewards.append(float(r_col))
    return math.fsum(row_rewards) / turns - math.fsum(col_rewards) / turns


class PayoffMatrixTest(SimpleTestCase):

    def test_prisoners_dilemma_table(self):
        expected = {
            ('C', 'C'): (3.0, 3.0),
            ('C', 'D'): (0.0, 5.0),
            ('D', 'C'): (5.0, 0.0),
            ('D', 'D'): (1.0, 1.0),
        }
        for (row, col), pair in expected.items():
            self.assertEqual(
                payoff_lookup(PRISONERS_DILEMMA, PRISONERS_DILEMMA.action(row), PRISONERS_DILEMMA.action(col)),
                pair,
            )

    def test_chicken_table(self):
        expected = {
            ('S', 'S'): (2.0, 2.0),
            ('S', 'G'): (1.0, 5.0),
            ('G', 'S'): (5.0, 1.0),
            ('G', 'G'): (0.0, 0.0),
        }
        for (row, col), pair in expected.items():
            self.assertEqual(payoff_lookup(CHICKEN, CHICKEN.action(row), CHICKEN.action(col)), pair)

    def test_action_indices_map_to_labels(self):
        self.assertEqual(payoff_lookup(PRISONERS_DILEMMA, 1, 0), (5.0, 0.0))
        self.assertEqual(CHICKEN.action(0).label, 'S')
        self.assertEqual(CHICKEN.action(1).label, 'G')

    def test_out_of_range_action_rejected(self):
        with self.assertRaises(GameDomainError):
            payoff_lookup(PRISONERS_DILEMMA, 2, 0)
        with self.assertRaises(GameDomainError):
            payoff_lookup(PRISONERS_DILEMMA, CHICKEN.action(0), 0)

    def test_game_aliases(self):
        self.assertIs(get_game('pd'), PRISONERS_DILEMMA)
        self.assertIs(get_game('Chicken'), CHICKEN)
        with self.assertRaises(GameDomainError):
            get_game('stag_hunt')

    def test_load_game_from_yaml(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'stag_hunt.yaml'
            path.write_text(
                "name: stag_hunt\n"
                "labels: [S, H]\n"
                "payoffs:\n"
                "  - [[4, 4], [0, 3]]\n"
                "  - [[3, 0], [3, 3]]\n",
                encoding='utf-8',
            )
            matrix = load_game(path)
            self.assertEqual(matrix.game_name, 'stag_hunt')
            self.assertEqual(matrix.size, 2)
            self.assertEqual(payoff_lookup(matrix, 0, 1), (0.0, 3.0))
            self.assertEqual(resolve_game('pd', path).game_name, 'stag_hunt')
            self.assertIs(resolve_game('pd'), PRISONERS_DILEMMA)

    def test_load_game_rejects_ragged_table(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'broken.yaml'
            path.write_text("name: broken\nlabels: [A, B]\npayoffs:\n  - [[1, 1], [0, 0]]\n", encoding='utf-8')
            with self.assertRaises(GameDomainError):
                load_game(path)


class StageTest(SimpleTestCase):

    def test_play_stage(self):
        outcome = play_stage(PRISONERS_DILEMMA, 0, 1, turn=3)
        self.assertEqual(outcome.turn, 3)
        self.assertEqual(outcome.a_learner.label, 'C')
        self.assertEqual(outcome.a_opponent.label, 'D')
        self.assertEqual((outcome.r_learner, outcome.r_opponent), (0.0, 5.0))

    def test_turns_start_at_one(self):
        with self.assertRaises(GameDomainError):
            play_stage(PRISONERS_DILEMMA, 0, 0, turn=0)

    def test_average_reward(self):
        self.assertEqual(average_reward([3.0, 0.0, 5.0, 1.0]), 2.25)
        with self.assertRaises(GameDomainError):
            average_reward([])


class RepeatedGameTest(SimpleTestCase):

    def play(self, row_id, col_id, turns=50):
        cfg = GameConfig(game_name='prisoners_dilemma', turns=turns)
        return play_repeated_game(cfg, get_strategy(row_id).player(), get_strategy(col_id).player())

    def test_record_shape(self):
        record = self.play('tit_for_tat', 'alternator')
        self.assertEqual(record.n, 50)
        self.assertEqual([o.turn for o in record.outcomes], list(range(1, 51)))
        self.assertEqual(record.game_name, 'prisoners_dilemma')
        self.assertEqual(record.opponent_id, 'alternator')
        self.assertEqual(record.delta_r, score_difference(record))

    def test_tit_for_tat_against_defector(self):
        record = self.play('tit_for_tat', 'defector')
        self.assertAlmostEqual(record.delta_r, -0.10, places=12)
        self.assertAlmostEqual(record.r_learner, 0.98, places=12)
        self.assertAlmostEqual(record.r_opponent, 1.08, places=12)

    def test_matchups_match_brute_force(self):
        for row_id, col_id in itertools.product(DETERMINISTIC, repeat=2):
            with self.subTest(row=row_id, col=col_id):
                self.assertEqual(self.play(row_id, col_id).delta_r, brute_force_delta(row_id, col_id))

    def test_score_difference_is_antisymmetric(self):
        forward = self.play('grudger', 'alternator')
        backward = self.play('alternator', 'grudger')
        self.assertEqual(forward.delta_r, -backward.delta_r)

    def test_players_never_see_game_length(self):
        seen = []

        def learner(view):
            seen.append(view)
            return 0

        play_repeated_game(GameConfig(game_name='prisoners_dilemma', turns=5), learner, lambda view: 1)
        self.assertEqual([v.turns_elapsed for v in seen], [0, 1, 2, 3, 4])
        self.assertTrue(all(isinstance(v, HistoryView) for v in seen))
        self.assertFalse(hasattr(seen[0], 'turns'))
        self.assertEqual(seen[-1].other, (1, 1, 1, 1))

    def test_opponent_view_is_mirrored(self):
        views = []

        def opponent(view):
            views.append(view)
            return 1

        play_repeated_game(GameConfig(game_name='prisoners_dilemma', turns=3), lambda view: 0, opponent)
        self.assertEqual(views[-1].own, (1, 1))
        self.assertEqual(views[-1].other, (0, 0))

    def test_stage_observer_receives_every_outcome(self):
        outcomes = []
        play_repeated_game(GameConfig(game_name='chicken', turns=7), lambda v: 0, lambda v: 1,
                           on_stage=outcomes.append)
        self.assertEqual(len(outcomes), 7)
        self.assertEqual(outcomes[0].r_learner, 1.0)

    def test_invalid_action_raises_protocol_error(self):
        cfg = GameConfig(game_name='prisoners_dilemma', turns=3)
        with self.assertRaises(ProtocolError):
            play_repeated_game(cfg, lambda view: 2, lambda view: 0)
        with self.assertRaises(ProtocolError):
            play_repeated_game(cfg, lambda view: 0, lambda view: 'X')

    def test_game_config_validation(self):
        with self.assertRaises(GameDomainError):
            GameConfig(game_name='prisoners_dilemma', turns=0)
        with self.assertRaises(GameDomainError):
            GameConfig(game_name='prisoners_dilemma', seed=-1)

    def test_record_from_actions_rederives_rewards(self):
        record = GameRecord.from_actions(PRISONERS_DILEMMA, [0, 1, 1], [1, 1, 0], opponent_id='scripted')
        self.assertEqual(record.r_learner, 2.0)
        self.assertEqual(record.r_opponent, 2.0)
        self.assertEqual(record.delta_r, 0.0)
        with self.assertRaises(GameDomainError):
            GameRecord.from_actions(PRISONERS_DILEMMA, [0, 1], [1], opponent_id='scripted')

    def test_cooperator_against_defector(self):
        record = self.play('cooperator', 'defector')
        self.assertEqual((record.r_learner, record.r_opponent, record.delta_r), (0.0, 5.0, -5.0))
