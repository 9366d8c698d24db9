"""
Tests for experiment run bookkeeping and the save-time signal rules.
"""

from django.test import TestCase

from services.harness import ResultRow

from experiments.models import MAX_STORED_SEED, EvaluationResult, ExperimentRun, storable_seed


def make_run(**fields):
    values = dict(command='train', game='prisoners_dilemma', pathway='o_oae_he_ad', oae_mode='one_step', seed=1)
    values.update(fields)
    return ExperimentRun.objects.create(**values)


class StorableSeedTest(TestCase):

    def test_seeds_in_range_are_kept(self):
        self.assertEqual(storable_seed(0), 0)
        self.assertEqual(storable_seed(MAX_STORED_SEED), MAX_STORED_SEED)

    def test_seeds_above_signed_range_are_dropped(self):
        self.assertIsNone(storable_seed(MAX_STORED_SEED + 1))
        self.assertIsNone(storable_seed(2 ** 64 - 1))
        self.assertIsNone(storable_seed(None))


class ExperimentRunTest(TestCase):

    def test_new_run_is_pending(self):
        run = make_run()
        self.assertEqual(run.status, 'PENDING')
        self.assertIsNone(run.get_duration())

    def test_lifecycle_sets_timestamps(self):
        run = make_run()
        run.mark_started()
        self.assertEqual(run.status, 'RUNNING')
        self.assertIsNotNone(run.started_at)

        run.mark_completed()
        run.refresh_from_db()
        self.assertEqual(run.status, 'COMPLETED')
        self.assertGreaterEqual(run.get_duration(), 0)

    def test_failed_run_keeps_error_log(self):
        run = make_run()
        run.mark_started()
        run.add_error('TrainingError', 'loss became NaN', {'epoch': 12})
        run.add_error('OSError', 'disk full')
        run.mark_completed(success=False)

        run.refresh_from_db()
        self.assertEqual(run.status, 'FAILED')
        errors = run.error_log['errors']
        self.assertEqual([e['type'] for e in errors], ['TrainingError', 'OSError'])
        self.assertEqual(errors[0]['details'], {'epoch': 12})
        self.assertEqual(errors[1]['details'], {})

    def test_identifiers_are_normalized_on_save(self):
        run = make_run(game='  Chicken ', pathway='M_OAE_AD', oae_mode='Multi_Step')
        run.refresh_from_db()
        self.assertEqual(run.game, 'chicken')
        self.assertEqual(run.pathway, 'm_oae_ad')
        self.assertEqual(run.oae_mode, 'multi_step')

    def test_str_uses_pathway_then_mode(self):
        run = make_run()
        self.assertEqual(str(run), "Train Policy - o_oae_he_ad seed 1 (Pending)")

        oae_run = make_run(command='train_oae', pathway='', oae_mode='multi_step', seed=3)
        self.assertEqual(str(oae_run), "Train Estimator - multi_step seed 3 (Pending)")

    def test_summary_stats(self):
        run = make_run()
        EvaluationResult.objects.create(run=run, pathway='o_oae_he_ad', pool='old', mean_delta_r=0.4,
                                        stderr=0.1, games=10, seed=1, epoch=10)
        run.add_error('TrainingError', 'boom')

        stats = run.get_summary_stats()
        self.assertEqual(stats['status'], 'PENDING')
        self.assertEqual(stats['results'], 1)
        self.assertEqual(stats['errors'], 1)
        self.assertIsNone(stats['duration'])


class EvaluationResultTest(TestCase):

    def setUp(self):
        self.train_run = make_run(game='chicken')

    def test_from_row_copies_every_field(self):
        row = ResultRow(pathway='o_oae_ad', pool='new', mean_delta_r=-0.25, stderr=0.05, games=40,
                        seed=7, game='chicken', epoch=500, variant='reused')
        result = EvaluationResult.from_row(self.train_run, row)
        result.save()

        result.refresh_from_db()
        self.assertEqual(result.run, self.train_run)
        self.assertEqual(result.pathway, 'o_oae_ad')
        self.assertEqual(result.pool, 'new')
        self.assertEqual(result.mean_delta_r, -0.25)
        self.assertEqual(result.games, 40)
        self.assertEqual(result.seed, 7)
        self.assertEqual(result.epoch, 500)
        self.assertEqual(result.variant, 'reused')
        self.assertEqual(str(result), "o_oae_ad new @ 500: -0.250")

    def test_oversized_seed_is_stored_as_null(self):
        row = ResultRow(pathway='pg', pool='old', mean_delta_r=0.0, stderr=0.0, games=1,
                        seed=2 ** 64 - 1, game='chicken')
        result = EvaluationResult.from_row(self.train_run, row)
        result.save()
        self.assertIsNone(EvaluationResult.objects.get(pk=result.pk).seed)

    def test_game_defaults_to_run_game(self):
        result = EvaluationResult.objects.create(run=self.train_run, pathway='pg', pool='old', mean_delta_r=0.1,
                                                 stderr=0.0, games=5)
        self.assertEqual(result.game, 'chicken')

    def test_rejects_empty_block(self):
        with self.assertRaises(ValueError):
            EvaluationResult.objects.create(run=self.train_run, pathway='pg', pool='old', mean_delta_r=0.0,
                                            stderr=0.0, games=0)

    def test_rejects_negative_stderr(self):
        with self.assertRaises(ValueError):
            EvaluationResult.objects.create(run=self.train_run, pathway='pg', pool='old', mean_delta_r=0.0,
                                            stderr=-0.1, games=3)

    def test_results_are_deleted_with_their_run(self):
        EvaluationResult.objects.create(run=self.train_run, pathway='pg', pool='old', mean_delta_r=0.0,
                                        stderr=0.0, games=3)
        self.train_run.delete()
        self.assertEqual(EvaluationResult.objects.count(), 0)
