"""
Tests for the harness management commands and their run bookkeeping.

Every command runs on a tiny configuration written to a temporary
directory, so the whole module finishes in seconds.
"""

import csv
import tempfile
from io import StringIO
from pathlib import Path

import yaml
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import TestCase

from services.game_core import PRISONERS_DILEMMA
from services.harness import read_results
from services.history_memory import PastMemory
from services.oae import OpponentActionEstimator

from experiments.models import EvaluationResult, ExperimentRun

TINY_CONFIG = {
    'turns': 6,
    'epochs': 20,
    'eval_every': 10,
    'eval_games': 4,
    'warmup_games': 20,
    'memory_capacity': 50,
    'oae_epochs': 20,
    'hidden_size': 4,
    'hops': 1,
    'k': 3,
    'seed': 1,
    'seeds': [1],
    'lr': 0.01,
}


class CommandTestCase(TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.root = Path(self.tmp.name)
        self.config_path = self.root / 'tiny.yaml'
        with open(self.config_path, 'w', encoding='utf-8') as fh:
            yaml.safe_dump(TINY_CONFIG, fh)

    def call(self, name, **options):
        out = StringIO()
        options.setdefault('config', str(self.config_path))
        options.setdefault('output_dir', str(self.root / 'runs'))
        call_command(name, stdout=out, **options)
        return out.getvalue()

    def run_dir(self, *parts):
        return self.root.joinpath('runs', *parts)


class PopulateMemoryCommandTest(CommandTestCase):

    def test_writes_memory_and_records_run(self):
        output = self.call('populate_memory')
        path = self.run_dir('populate_memory', 'prisoners_dilemma', 'random', 'seed-1', 'memory.jsonl')
        self.assertIn('Wrote 20 records', output)
        self.assertEqual(len(PastMemory.load(path, PRISONERS_DILEMMA, capacity=50)), 20)

        run = ExperimentRun.objects.get()
        self.assertEqual(run.command, 'populate_memory')
        self.assertEqual(run.status, 'COMPLETED')
        self.assertEqual(run.config['turns'], 6)
        self.assertTrue((path.parent / 'config.yaml').exists())

    def test_from_checkpoint_needs_agent(self):
        with self.assertRaises(CommandError):
            self.call('populate_memory', populate='from-checkpoint')
        run = ExperimentRun.objects.get()
        self.assertEqual(run.status, 'FAILED')
        self.assertEqual(run.error_log['errors'][0]['type'], 'ConfigurationError')

    def test_from_checkpoint_plays_the_agent(self):
        self.call('train', pathway='qlearning')
        agent = self.run_dir('train', 'prisoners_dilemma', 'qlearning', 'seed-1', 'qtable.jsonl')

        self.call('populate_memory', populate='from-checkpoint', agent=str(agent))
        run = ExperimentRun.objects.filter(command='populate_memory').get()
        self.assertEqual(run.pathway, 'qlearning')
        self.assertTrue(
            self.run_dir('populate_memory', 'prisoners_dilemma', 'from-checkpoint', 'seed-1', 'memory.jsonl').exists()
        )


class TrainOAECommandTest(CommandTestCase):

    def test_trains_and_freezes_estimator(self):
        output = self.call('train_oae', oae_mode='multi_step')
        directory = self.run_dir('train_oae', 'prisoners_dilemma', 'multi_step', 'seed-1')

        oae = OpponentActionEstimator.load(directory / 'oae.ckpt')
        self.assertTrue(oae.frozen)
        self.assertEqual(oae.mode.value, 'multi_step')
        self.assertTrue((directory / 'memory.jsonl').exists())
        with open(directory / 'oae_losses.csv', newline='', encoding='utf-8') as fh:
            losses = list(csv.DictReader(fh))
        self.assertEqual(len(losses), 20)
        self.assertEqual(losses[-1]['epoch'], '20')

        run = ExperimentRun.objects.get()
        self.assertEqual(run.oae_mode, 'multi_step')
        self.assertEqual(run.checkpoint_hash, oae.fingerprint())
        self.assertIn(oae.fingerprint()[:12], output)

    def test_uses_given_memory(self):
        self.call('populate_memory')
        memory = self.run_dir('populate_memory', 'prisoners_dilemma', 'random', 'seed-1', 'memory.jsonl')

        self.call('train_oae', memory=str(memory))
        directory = self.run_dir('train_oae', 'prisoners_dilemma', 'one_step', 'seed-1')
        self.assertTrue((directory / 'oae.ckpt').exists())
        self.assertFalse((directory / 'memory.jsonl').exists())


class TrainCommandTest(CommandTestCase):

    def test_train_records_evaluation_blocks(self):
        output = self.call('train', pathway='pg')
        directory = self.run_dir('train', 'prisoners_dilemma', 'pg', 'seed-1')

        run = ExperimentRun.objects.get()
        self.assertEqual(run.status, 'COMPLETED')
        self.assertEqual(run.pathway, 'pg')
        self.assertEqual(run.oae_mode, '')
        self.assertEqual(len(run.checkpoint_hash), 64)
        self.assertEqual(
            list(run.results.values_list('epoch', 'pool')),
            [(10, 'new'), (10, 'old'), (20, 'new'), (20, 'old')],
        )
        self.assertEqual(len(read_results(directory / 'results.csv')), 4)
        self.assertTrue((directory / 'agent.ckpt').exists())
        self.assertIn('Wrote agent to', output)

    def test_train_with_pretrained_estimator(self):
        self.call('train_oae')
        source = self.run_dir('train_oae', 'prisoners_dilemma', 'one_step', 'seed-1')
        estimator_hash = ExperimentRun.objects.get(command='train_oae').checkpoint_hash

        self.call('train', pathway='o_oae_ad', oae=str(source / 'oae.ckpt'), memory=str(source / 'memory.jsonl'))
        run = ExperimentRun.objects.get(command='train')
        self.assertEqual(run.oae_mode, 'one_step')
        self.assertEqual(run.oae_hash, estimator_hash)

        saved = OpponentActionEstimator.load(
            self.run_dir('train', 'prisoners_dilemma', 'o_oae_ad', 'seed-1', 'oae.ckpt')
        )
        self.assertEqual(saved.fingerprint(), estimator_hash)

    def test_command_line_flags_override_config_file(self):
        self.call('train', pathway='qlearning', epochs=10, turns=4)
        run = ExperimentRun.objects.get()
        self.assertEqual(run.config['epochs'], 10)
        self.assertEqual(run.config['turns'], 4)
        self.assertEqual(run.config['eval_games'], 4)
        self.assertEqual(run.results.count(), 2)

    def test_invalid_configuration_creates_no_run(self):
        with self.assertRaisesMessage(CommandError, 'Invalid configuration'):
            self.call('train', pathway='not_a_pathway')
        self.assertFalse(ExperimentRun.objects.exists())

    def test_no_record(self):
        self.call('train', pathway='qlearning', no_record=True)
        self.assertFalse(ExperimentRun.objects.exists())
        self.assertTrue(self.run_dir('train', 'prisoners_dilemma', 'qlearning', 'seed-1', 'qtable.jsonl').exists())


class EvalCommandTest(CommandTestCase):

    def test_eval_saved_agent(self):
        self.call('train', pathway='qlearning')
        agent = self.run_dir('train', 'prisoners_dilemma', 'qlearning', 'seed-1', 'qtable.jsonl')
        trained_hash = ExperimentRun.objects.get(command='train').checkpoint_hash

        output = self.call('eval', agent=str(agent), eval_games=6)
        run = ExperimentRun.objects.get(command='eval')
        self.assertEqual(run.pathway, 'qlearning')
        self.assertEqual(run.checkpoint_hash, trained_hash)
        self.assertEqual(list(run.results.values_list('epoch', 'games')), [(0, 6), (0, 6)])
        self.assertIn('Q-learning', output)

    def test_eval_needs_agent(self):
        with self.assertRaisesMessage(CommandError, '--agent'):
            self.call('eval')


class TransferCommandTest(CommandTestCase):

    def test_transfer_writes_both_variants(self):
        output = self.call('transfer', game='chicken', pathway='o_oae_ad')
        directory = self.run_dir('transfer', 'chicken', 'o_oae_ad', 'seed-1')

        run = ExperimentRun.objects.get()
        self.assertEqual(run.status, 'COMPLETED')
        self.assertEqual(run.game, 'chicken')
        self.assertEqual(run.notes, 'source game: prisoners_dilemma')
        self.assertEqual(run.results.count(), 8)
        self.assertEqual(set(run.results.values_list('variant', flat=True)), {'new_trained', 'reused'})
        self.assertEqual(set(run.results.values_list('game', flat=True)), {'chicken'})

        reused = OpponentActionEstimator.load(directory / 'reused' / 'oae.ckpt')
        self.assertEqual(reused.fingerprint(), run.oae_hash)
        self.assertEqual(reused.source_game, 'prisoners_dilemma')
        self.assertTrue((directory / 'new_trained' / 'agent.ckpt').exists())
        self.assertTrue((directory / 'source_config.yaml').exists())
        self.assertIn(run.oae_hash[:12], output)

    def test_transfer_failure_marks_run_failed(self):
        with self.assertRaises(CommandError):
            self.call('transfer', game='chicken', pathway='pg')
        run = ExperimentRun.objects.get()
        self.assertEqual(run.status, 'FAILED')
        self.assertEqual(run.error_log['errors'][0]['type'], 'ConfigurationError')
        self.assertFalse(EvaluationResult.objects.exists())


class TableCommandTest(CommandTestCase):

    def test_grid_over_pathways_and_seeds(self):
        output = self.call('table', pathways='qlearning,pg', seeds='1,2')
        run = ExperimentRun.objects.get()
        self.assertEqual(run.status, 'COMPLETED')
        self.assertEqual(run.config['seeds'], [1, 2])
        self.assertEqual(run.results.count(), 16)
        self.assertEqual(set(run.results.values_list('seed', flat=True)), {1, 2})
        self.assertTrue(self.run_dir('table', 'prisoners_dilemma', 'results.csv').exists())
        self.assertIn('Q-learning', output)
        self.assertIn('PG', output)

    def test_unknown_pathway(self):
        with self.assertRaisesMessage(CommandError, 'Unknown pathways: dqn'):
            self.call('table', pathways='qlearning,dqn')

    def test_seeds_must_be_integers(self):
        with self.assertRaises(CommandError):
            self.call('table', seeds='1,two')


class ListStrategiesCommandTest(TestCase):

    def test_lists_library_and_split(self):
        out = StringIO()
        call_command('list_strategies', stdout=out)
        lines = out.getvalue().splitlines()
        self.assertTrue(any(line.startswith('tit_for_tat') and ' old ' in line for line in lines))
        self.assertTrue(any(line.startswith('random') and '(stochastic)' in line for line in lines))
        self.assertIn('old: 7 strategies, new: 5 strategies', out.getvalue())

    def test_missing_pool_file(self):
        with self.assertRaises(CommandError):
            call_command('list_strategies', pool_file='/nonexistent/pool.yaml', stdout=StringIO())
