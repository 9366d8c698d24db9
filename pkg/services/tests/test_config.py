"""
Tests for experiment configuration layering and validation.
"""

import tempfile
from pathlib import Path

from django.test import SimpleTestCase, override_settings

from services.config import ExperimentConfig, environment_overrides, load_config
from services.exceptions import ConfigurationError


class LoadConfigTest(SimpleTestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)

    def write(self, text):
        path = Path(self.tmp.name) / 'config.yaml'
        path.write_text(text, encoding='utf-8')
        return path

    def test_defaults(self):
        config = load_config(environ={})
        self.assertEqual(config.turns, 50)
        self.assertEqual(config.k, 5)
        self.assertEqual(config.memory_capacity, 1000)
        self.assertEqual(config.seeds, [1, 2, 3, 4, 5])

    @override_settings(EXPERIMENT_DEFAULTS={'turns': 20, 'k': 3, 'hidden_size': 16})
    def test_layers_apply_in_order(self):
        path = self.write("k: 4\nhidden_size: 32\n")
        environ = {'ADAPTLAB_K': '7', 'ADAPTLAB_HOPS': '2', 'ADAPTLAB_TURNS': '30'}
        config = load_config(path, overrides={'hidden_size': 8, 'turns': None}, environ=environ)
        self.assertEqual(config.hops, 2)
        self.assertEqual(config.turns, 30)
        self.assertEqual(config.k, 4)
        self.assertEqual(config.hidden_size, 8)

    def test_environment_values_are_yaml_parsed(self):
        overrides = environment_overrides({
            'ADAPTLAB_SEEDS': '[7, 8]',
            'ADAPTLAB_REINFORCE_BASELINE': 'true',
            'ADAPTLAB_LR': '0.01',
            'UNRELATED': 'x',
        })
        self.assertEqual(overrides, {'seeds': [7, 8], 'reinforce_baseline': True, 'lr': 0.01})

    @override_settings(EXPERIMENT_DEFAULTS={'turnz': 5})
    def test_unknown_settings_key(self):
        with self.assertRaises(ConfigurationError):
            load_config(environ={})

    def test_unknown_file_key(self):
        with self.assertRaises(ConfigurationError):
            load_config(self.write("learning_rate: 0.1\n"), environ={})

    def test_malformed_file(self):
        with self.assertRaises(ConfigurationError):
            load_config(self.write("- just\n- a list\n"), environ={})
        with self.assertRaises(ConfigurationError):
            load_config(Path(self.tmp.name) / 'missing.yaml', environ={})

    def test_validation_collects_problems(self):
        with self.assertRaises(ConfigurationError) as ctx:
            load_config(overrides={'pathway': 'sarsa', 'turns': 0, 'seed': -1}, environ={})
        message = str(ctx.exception)
        self.assertIn('pathway', message)
        self.assertIn('turns', message)
        self.assertIn('seed -1', message)


class ExperimentConfigTest(SimpleTestCase):

    def test_pathway_estimator_mode(self):
        config = ExperimentConfig(pathway='m_oae_ad')
        self.assertTrue(config.uses_oae)
        self.assertEqual(config.pathway_oae_mode, 'multi_step')
        self.assertEqual(ExperimentConfig(pathway='pg', oae_mode='multi_step').pathway_oae_mode, 'multi_step')
        self.assertFalse(ExperimentConfig(pathway='he_ad_dqn').uses_oae)

    def test_replace_validates(self):
        config = ExperimentConfig()
        self.assertEqual(config.replace(turns=10).turns, 10)
        self.assertEqual(config.turns, 50)
        with self.assertRaises(ConfigurationError):
            config.replace(optimizer='rmsprop')

    def test_write_yaml_round_trip(self):
        config = ExperimentConfig(turns=12, seeds=[3])
        with tempfile.TemporaryDirectory() as tmp:
            path = config.write_yaml(Path(tmp) / 'nested' / 'config.yaml')
            restored = load_config(path, environ={})
        self.assertEqual(restored.turns, 12)
        self.assertEqual(restored.seeds, [3])
