"""
Tests for the tabular Q-learning and DQN baselines.
"""

import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from services.agents import load_agent
from services.baselines import (
    DQNAgent,
    QLearningAgent,
    QTable,
    ReplayBuffer,
    Transition,
    prefix_batch,
    qlearning_step,
    td_loss,
    td_targets,
)
from services.exceptions import GameDomainError
from services.game_core import PRISONERS_DILEMMA, GameConfig
from services.strategies import get_strategy

CFG = GameConfig(game_name='prisoners_dilemma', turns=10)


class QTableTest(SimpleTestCase):

    def test_second_order_state(self):
        q = QTable(2)
        self.assertEqual(q.n_states, 25)
        self.assertEqual(q.state_of([]), 24)
        self.assertEqual(q.state_of([(1, 0)]), 22)
        self.assertEqual(q.state_of([(0, 0), (0, 1), (1, 1)]), 8)

    def test_update_rule(self):
        q = QTable(2, alpha=0.1, gamma=0.9)
        q.values[3] = [0.0, 2.0]
        qlearning_step(q, 0, 1, 5.0, 3)
        self.assertAlmostEqual(q.values[0, 1], 0.68)
        with self.assertRaises(GameDomainError):
            qlearning_step(q, 25, 0, 1.0, 0)
        with self.assertRaises(GameDomainError):
            qlearning_step(q, 0, 2, 1.0, 0)

    def test_table_serialization(self):
        q = QTable(2, alpha=0.2)
        q.values[5, 1] = 1.25
        restored = QTable.loads(q.dumps())
        self.assertEqual(restored.alpha, 0.2)
        np.testing.assert_array_equal(restored.values, q.values)


class QLearningAgentTest(SimpleTestCase):

    def test_learns_to_defect_against_defector(self):
        agent = QLearningAgent(2, alpha=0.2, gamma=0.9, epsilon=0.1)
        rng = np.random.default_rng(0)
        for _ in range(300):
            agent.play_game(CFG, get_strategy('defector').player(), PRISONERS_DILEMMA, training=True, rng=rng)
        before = agent.fingerprint()
        record = agent.play_game(CFG, get_strategy('defector').player(), PRISONERS_DILEMMA, training=False,
                                 rng=np.random.default_rng(1))
        self.assertEqual(record.learner_actions, (1,) * 10)
        self.assertEqual(agent.fingerprint(), before)

    def test_save_and_load(self):
        agent = QLearningAgent(2)
        agent.play_game(CFG, get_strategy('alternator').player(), PRISONERS_DILEMMA, training=True,
                        rng=np.random.default_rng(2))
        with tempfile.TemporaryDirectory() as tmp:
            path = agent.save(Path(tmp) / 'agent.jsonl')
            restored = load_agent(path)
        self.assertIsInstance(restored, QLearningAgent)
        self.assertEqual(restored.fingerprint(), agent.fingerprint())


class ReplayTest(SimpleTestCase):

    def transition(self, reward):
        return Transition(((0, 0),), 1, reward, ((0, 0), (1, 0)))

    def test_ring_buffer_overwrites_oldest(self):
        buffer = ReplayBuffer(3)
        for reward in range(5):
            buffer.push(self.transition(float(reward)))
        self.assertEqual(len(buffer), 3)
        self.assertEqual([t.reward for t in buffer.buffer], [3.0, 4.0, 2.0])
        sample = buffer.sample(10, np.random.default_rng(0))
        self.assertEqual(sorted(t.reward for t in sample), [2.0, 3.0, 4.0])
        with self.assertRaises(GameDomainError):
            ReplayBuffer(0)

    def test_td_targets(self):
        y = td_targets(np.array([1.0, 1.0]), np.array([2.0, 2.0]), np.array([0.0, 1.0]), 0.5)
        np.testing.assert_array_equal(y, [2.0, 1.0])
        self.assertAlmostEqual(td_loss(2.0, 0.5, 2.0, 0.5), 0.25)
        self.assertAlmostEqual(td_loss(2.0, 0.5, 2.0, 0.5, done=True), 2.25)

    def test_prefix_batch(self):
        xs, lengths = prefix_batch([(), ((0, 1), (1, 1))], 2)
        self.assertEqual(xs.shape, (2, 3, 5))
        self.assertEqual(lengths.tolist(), [1, 3])
        self.assertEqual(xs[0, 0, -1], 1.0)
        np.testing.assert_array_equal(xs[1, 2], [0, 1, 0, 1, 0])


class DQNAgentTest(SimpleTestCase):

    def make_agent(self, **kwargs):
        options = {'hidden_size': 4, 'batch_size': 4, 'sync_every': 5, 'epsilon_steps': 50,
                   'rng': np.random.default_rng(3), 'init_scale': 0.3, 'lr': 0.01}
        options.update(kwargs)
        return DQNAgent(2, **options)

    def batch(self):
        return [
            Transition((), 0, 3.0, ((0, 0),)),
            Transition(((0, 1),), 1, 1.0, ((0, 1), (1, 1))),
            Transition(((1, 0), (1, 1)), 0, 0.0, ((1, 0), (1, 1), (0, 1)), done=True),
            Transition(((0, 0), (0, 0), (1, 1)), 1, 5.0, ((0, 0), (0, 0), (1, 1), (1, 0))),
        ]

    def test_batched_values_match_graph(self):
        agent = self.make_agent()
        prefixes = [t.prefix for t in self.batch()]
        batched = agent.online.q_batch(prefixes)
        for row, prefix in enumerate(prefixes):
            np.testing.assert_allclose(batched[row], agent.online.q_graph(prefix).value, rtol=1e-10, atol=1e-12)

        state = agent.online.begin()
        for a_own, a_other in prefixes[-1]:
            state = agent.online.advance(state, a_own, a_other)
        np.testing.assert_allclose(agent.online.q_from_state(state), batched[-1], rtol=1e-10, atol=1e-12)

    def test_batched_learning_matches_graph_loss(self):
        agent = self.make_agent()
        batch = self.batch()
        actions = np.asarray([t.action for t in batch])
        next_max = agent.target.q_batch([t.next_prefix for t in batch]).max(axis=1)
        y = td_targets(np.asarray([t.reward for t in batch]), next_max,
                       np.asarray([float(t.done) for t in batch]), agent.gamma)

        batched_loss = agent._learn_history(batch, actions, y)
        batched_grads = {p.name: p.grad.copy() for p in agent.store}
        agent.store.zero_grad()
        graph_loss = agent._learn_graph(batch, actions, y)

        self.assertAlmostEqual(batched_loss, graph_loss, places=10)
        for param in agent.store:
            np.testing.assert_allclose(batched_grads[param.name], param.grad, rtol=1e-8, atol=1e-12)
        agent.store.zero_grad()

    def test_online_training_and_target_sync(self):
        agent = self.make_agent()
        rng = np.random.default_rng(4)
        for _ in range(3):
            agent.play_game(CFG, get_strategy('tit_for_tat').player(), PRISONERS_DILEMMA, training=True, rng=rng)
        self.assertEqual(agent.env_steps, 30)
        self.assertEqual(agent.learn_steps, 30)
        self.assertEqual(len(agent.losses), 30)
        self.assertEqual(len(agent.buffer), 30)
        for name, value in agent.target_store.snapshot().items():
            np.testing.assert_array_equal(value, agent.store[name].value)
        self.assertAlmostEqual(agent.epsilon, 1.0 + (30 / 50) * (0.05 - 1.0))

        before = agent.fingerprint()
        agent.play_game(CFG, get_strategy('tit_for_tat').player(), PRISONERS_DILEMMA, training=False,
                        rng=np.random.default_rng(0))
        self.assertEqual(agent.fingerprint(), before)
        self.assertEqual(agent.learn_steps, 30)

    def test_loss_history_is_bounded(self):
        agent = self.make_agent(loss_window=8)
        rng = np.random.default_rng(6)
        for _ in range(2):
            agent.play_game(CFG, get_strategy('tit_for_tat').player(), PRISONERS_DILEMMA, training=True, rng=rng)
        self.assertEqual(agent.learn_steps, 20)
        self.assertEqual(len(agent.losses), 8)
        self.assertAlmostEqual(agent.mean_loss, float(np.mean(agent.losses)))

        self.assertIsNone(self.make_agent().mean_loss)
        with self.assertRaises(ValueError):
            self.make_agent(loss_window=0)

    def test_hierarchical_encoder_variant(self):
        agent = self.make_agent(encoder='hierarchical')
        agent.play_game(CFG, get_strategy('grudger').player(), PRISONERS_DILEMMA, training=True,
                        rng=np.random.default_rng(5))
        self.assertEqual(agent.learn_steps, 10)
        self.assertTrue(all(np.isfinite(agent.losses)))
        with self.assertRaises(ValueError):
            self.make_agent(encoder='transformer')

    def test_checkpoint_round_trip(self):
        agent = self.make_agent()
        agent.play_game(CFG, get_strategy('alternator').player(), PRISONERS_DILEMMA, training=True,
                        rng=np.random.default_rng(6))
        with tempfile.TemporaryDirectory() as tmp:
            path = agent.save(Path(tmp) / 'agent.ckpt')
            restored = load_agent(path)
        self.assertIsInstance(restored, DQNAgent)
        self.assertEqual(restored.fingerprint(), agent.fingerprint())
        self.assertEqual(restored.env_steps, agent.env_steps)
