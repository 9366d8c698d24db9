"""
Experiments Filters - adaptlab API
django-filter filter sets for experiment runs and evaluation results.

Provides filtering for:
- Run lookup by command, status, game, pathway and seed
- Result slicing by pathway, pool, game, seed, variant and epoch range
"""

from django_filters import rest_framework as filters
from django_filters import CharFilter, ChoiceFilter, NumberFilter

from .models import EvaluationResult, ExperimentRun


# =============================================================================
# EXPERIMENT RUN FILTERS
# =============================================================================

class ExperimentRunFilter(filters.FilterSet):

    command = ChoiceFilter(
        choices=ExperimentRun.COMMANDS,
        help_text='Filter by harness command'
    )

    status = ChoiceFilter(
        choices=ExperimentRun.RUN_STATUS,
        help_text='Filter by run status'
    )

    game = CharFilter(
        field_name='game',
        lookup_expr='iexact',
        help_text='Filter by game name (exact match)'
    )

    pathway = CharFilter(
        field_name='pathway',
        lookup_expr='iexact',
        help_text='Filter by pathway id, e.g. o_oae_he_ad'
    )

    seed = NumberFilter(
        field_name='seed',
        help_text='Filter by master seed'
    )

    class Meta:
        model = ExperimentRun
        fields = ['command', 'status', 'game', 'pathway', 'seed']


# =============================================================================
# EVALUATION RESULT FILTERS
# =============================================================================

class EvaluationResultFilter(filters.FilterSet):
    """
    Filtering for evaluation rows.

    Reproduces the slices of the comparison tables: one game, one pool,
    one pathway (or a comma-separated list), optionally restricted to the
    final evaluation blocks through ``epoch_min``.
    """

    pathway = CharFilter(
        field_name='pathway',
        lookup_expr='iexact',
        help_text='Filter by pathway id'
    )

    pathways = CharFilter(
        method='filter_multiple_pathways',
        help_text='Filter by multiple pathway ids (comma-separated)'
    )

    pool = ChoiceFilter(
        choices=EvaluationResult.POOLS,
        help_text='Filter by opponent pool (old or new)'
    )

    game = CharFilter(
        field_name='game',
        lookup_expr='iexact',
        help_text='Filter by game name'
    )

    seed = NumberFilter(
        field_name='seed',
        help_text='Filter by master seed'
    )

    variant = CharFilter(
        field_name='variant',
        lookup_expr='exact',
        help_text='Filter transfer rows by variant (new_trained or reused)'
    )

    epoch_min = NumberFilter(
        field_name='epoch',
        lookup_expr='gte',
        help_text='Minimum training epoch'
    )

    epoch_max = NumberFilter(
        field_name='epoch',
        lookup_expr='lte',
        help_text='Maximum training epoch'
    )

    run = NumberFilter(
        field_name='run_id',
        help_text='Filter by run id'
    )

    def filter_multiple_pathways(self, queryset, name, value):
        pathways = [p.strip().lower() for p in value.split(',') if p.strip()]
        if pathways:
            return queryset.filter(pathway__in=pathways)
        return queryset

    class Meta:
        model = EvaluationResult
        fields = ['pathway', 'pool', 'game', 'seed', 'variant', 'run']
