"""
Tests for the read-only experiment API.
"""

from django.urls import reverse
from rest_framework import status
from rest_framework.test import APITestCase

from experiments.models import EvaluationResult, ExperimentRun


class ExperimentAPITestCase(APITestCase):

    def setUp(self):
        self.train_run = ExperimentRun.objects.create(
            command='train', game='prisoners_dilemma', pathway='o_oae_he_ad', oae_mode='one_step', seed=1,
            config={'turns': 50}, output_dir='runs/train/prisoners_dilemma/o_oae_he_ad/seed-1',
        )
        self.train_run.mark_started()
        self.train_run.mark_completed()
        for epoch, old, new in ((500, 0.2, -0.4), (1000, 0.6, -0.1)):
            self.add_result(self.train_run, 'o_oae_he_ad', 'old', old, epoch)
            self.add_result(self.train_run, 'o_oae_he_ad', 'new', new, epoch)

        self.other = ExperimentRun.objects.create(command='train', game='chicken', pathway='pg', seed=2)
        self.add_result(self.other, 'pg', 'old', 1.5, 500)

    @staticmethod
    def add_result(run, pathway, pool, mean, epoch):
        return EvaluationResult.objects.create(run=run, pathway=pathway, pool=pool, mean_delta_r=mean,
                                               stderr=0.1, games=20, seed=run.seed, epoch=epoch)


class RunEndpointTest(ExperimentAPITestCase):

    def test_list_runs(self):
        response = self.client.get(reverse('run-list'))
        self.assertEqual(response.status_code, status.HTTP_200_OK)
        self.assertEqual(response.data['count'], 2)
        counts = {entry['id']: entry['result_count'] for entry in response.data['results']}
        self.assertEqual(counts, {self.train_run.pk: 4, self.other.pk: 1})
        self.assertNotIn('config', response.data['results'][0])

    def test_filter_runs_by_game_and_status(self):
        response = self.client.get(reverse('run-list'), {'game': 'CHICKEN'})
        self.assertEqual([entry['id'] for entry in response.data['results']], [self.other.pk])

        response = self.client.get(reverse('run-list'), {'status': 'COMPLETED'})
        self.assertEqual([entry['id'] for entry in response.data['results']], [self.train_run.pk])

    def test_run_detail(self):
        response = self.client.get(reverse('run-detail', args=[self.train_run.pk]))
        self.assertEqual(response.status_code, status.HTTP_200_OK)
        self.assertEqual(response.data['config'], {'turns': 50})
        self.assertEqual(response.data['status'], 'COMPLETED')
        self.assertEqual(response.data['summary']['results'], 4)
        self.assertEqual(response.data['summary']['errors'], 0)

    def test_missing_run(self):
        response = self.client.get(reverse('run-detail', args=[9999]))
        self.assertEqual(response.status_code, status.HTTP_404_NOT_FOUND)

    def test_run_results(self):
        response = self.client.get(reverse('run-results', args=[self.train_run.pk]), {'epoch_min': 1000})
        self.assertEqual(response.status_code, status.HTTP_200_OK)
        self.assertEqual(response.data['count'], 2)
        self.assertEqual({entry['pool'] for entry in response.data['results']}, {'old', 'new'})
        self.assertEqual(response.data['results'][0]['pathway_label'], 'O-OAE+HE+AD')

    def test_run_summary_uses_final_block(self):
        response = self.client.get(reverse('run-summary', args=[self.train_run.pk]))
        self.assertEqual(response.status_code, status.HTTP_200_OK)
        cell = response.data['summary']['prisoners_dilemma']['O-OAE+HE+AD']
        self.assertAlmostEqual(cell['old'], 0.6)
        self.assertAlmostEqual(cell['new'], -0.1)

    def test_summary_of_run_without_results(self):
        empty = ExperimentRun.objects.create(command='train_oae', game='prisoners_dilemma', oae_mode='one_step')
        response = self.client.get(reverse('run-summary', args=[empty.pk]))
        self.assertEqual(response.data['summary'], {})
        self.assertEqual(response.data['status'], 'PENDING')

    def test_api_is_read_only(self):
        response = self.client.post(reverse('run-list'), {'command': 'train', 'game': 'chicken'})
        self.assertEqual(response.status_code, status.HTTP_405_METHOD_NOT_ALLOWED)


class ResultEndpointTest(ExperimentAPITestCase):

    def test_list_results(self):
        response = self.client.get(reverse('result-list'))
        self.assertEqual(response.status_code, status.HTTP_200_OK)
        self.assertEqual(response.data['count'], 5)

    def test_filter_by_pathway_list(self):
        response = self.client.get(reverse('result-list'), {'pathways': 'PG, qlearning'})
        self.assertEqual(response.data['count'], 1)
        self.assertEqual(response.data['results'][0]['pathway'], 'pg')
        self.assertEqual(response.data['results'][0]['game'], 'chicken')

    def test_filter_by_pool_and_epoch_range(self):
        response = self.client.get(reverse('result-list'), {'pool': 'new', 'epoch_max': 500})
        self.assertEqual(response.data['count'], 1)
        self.assertAlmostEqual(response.data['results'][0]['mean_delta_r'], -0.4)

    def test_filter_by_run(self):
        response = self.client.get(reverse('result-list'), {'run': self.other.pk})
        self.assertEqual(response.data['count'], 1)

    def test_ordering_by_mean(self):
        response = self.client.get(reverse('result-list'), {'ordering': '-mean_delta_r'})
        means = [entry['mean_delta_r'] for entry in response.data['results']]
        self.assertEqual(means, sorted(means, reverse=True))


class CatalogEndpointTest(APITestCase):

    def test_strategy_catalog(self):
        response = self.client.get(reverse('strategy-catalog'))
        self.assertEqual(response.status_code, status.HTTP_200_OK)
        self.assertEqual(response.data['count'], 12)
        pools = {entry['id']: entry['pool'] for entry in response.data['strategies']}
        self.assertEqual(pools['tit_for_tat'], 'old')
        self.assertEqual(pools['hard_tit_for_tat'], 'new')
        self.assertEqual(len(response.data['default_pool']['old']), 7)
        self.assertEqual(len(response.data['default_pool']['new']), 5)

    def test_game_catalog(self):
        response = self.client.get(reverse('game-catalog'))
        self.assertEqual(response.status_code, status.HTTP_200_OK)
        games = {entry['name']: entry for entry in response.data}
        self.assertEqual(set(games), {'prisoners_dilemma', 'chicken'})
        self.assertEqual(games['prisoners_dilemma']['payoffs'][0][1], [0.0, 5.0])
        self.assertEqual(games['chicken']['labels'], ['S', 'G'])
        self.assertEqual(games['chicken']['actions'], 2)

    def test_health_check(self):
        response = self.client.get(reverse('health-check'))
        self.assertEqual(response.status_code, status.HTTP_200_OK)
        self.assertEqual(response.data['service'], 'adaptlab')
        self.assertEqual(response.data['status'], 'healthy')
        self.assertEqual(response.data['data'], {'runs': 0, 'results': 0})
