"""
Experiments Views - adaptlab API
Read-only Django REST Framework views over recorded runs and results.

Runs and results are written by the management commands; the API only
reads them. Catalog endpoints expose the built-in games and the strategy
library straight from the services package.
"""

import logging

from django.db.models import Count
from django.utils import timezone

from rest_framework import filters, status
from rest_framework.decorators import action, api_view
from rest_framework.pagination import PageNumberPagination
from rest_framework.response import Response
from rest_framework.viewsets import ReadOnlyModelViewSet

from django_filters.rest_framework import DjangoFilterBackend

from services.game_core import BUILTIN_GAMES
from services.harness import ResultRow, summarize
from services.strategies import CATALOG, DEFAULT_POOL

from .filters import EvaluationResultFilter, ExperimentRunFilter
from .models import EvaluationResult, ExperimentRun
from .serializers import (
    EvaluationResultSerializer,
    ExperimentRunDetailSerializer,
    ExperimentRunListSerializer,
    GameSerializer,
    StrategySerializer,
)

logger = logging.getLogger(__name__)


# =============================================================================
# PAGINATION CONFIGURATION
# =============================================================================

class StandardResultsSetPagination(PageNumberPagination):
    """Standard pagination for API responses"""
    page_size = 20
    page_size_query_param = 'page_size'
    max_page_size = 500


def to_result_row(result: EvaluationResult) -> ResultRow:
    return ResultRow(
        pathway=result.pathway,
        pool=result.pool,
        mean_delta_r=result.mean_delta_r,
        stderr=result.stderr,
        games=result.games,
        seed=result.seed if result.seed is not None else 0,
        game=result.game,
        epoch=result.epoch,
        variant=result.variant,
    )


# =============================================================================
# EXPERIMENT RUN VIEWS
# =============================================================================

class ExperimentRunViewSet(ReadOnlyModelViewSet):
    """
    Provides:
    - GET /api/v1/runs/ - List runs with filtering and ordering
    - GET /api/v1/runs/{id}/ - Run detail with config and error log
    - GET /api/v1/runs/{id}/results/ - Evaluation rows of the run
    - GET /api/v1/runs/{id}/summary/ - Final-block comparison summary
    """

    pagination_class = StandardResultsSetPagination
    filter_backends = [DjangoFilterBackend, filters.SearchFilter, filters.OrderingFilter]
    filterset_class = ExperimentRunFilter
    search_fields = ['game', 'pathway', 'output_dir', 'notes']
    ordering_fields = ['created_at', 'completed_at', 'seed', 'game', 'pathway']
    ordering = ['-created_at']

    def get_queryset(self):
        return ExperimentRun.objects.annotate(result_count=Count('results'))

    def get_serializer_class(self):
        if self.action == 'retrieve':
            return ExperimentRunDetailSerializer
        return ExperimentRunListSerializer

    @action(detail=True, methods=['get'])
    def results(self, request, pk=None):
        """
        Evaluation rows of one run
        GET /api/v1/runs/{id}/results/
        """
        run = self.get_object()
        result_filter = EvaluationResultFilter(request.GET, queryset=run.results.all())

        paginator = StandardResultsSetPagination()
        page = paginator.paginate_queryset(result_filter.qs, request)
        serializer = EvaluationResultSerializer(page, many=True)
        return paginator.get_paginated_response(serializer.data)

    @action(detail=True, methods=['get'])
    def summary(self, request, pk=None):
        """
        Final-block mean ΔR per game, pathway and pool, averaged over seeds
        GET /api/v1/runs/{id}/summary/
        """
        run = self.get_object()
        rows = [to_result_row(result) for result in run.results.all()]
        return Response({
            'run': run.pk,
            'status': run.status,
            'summary': summarize(rows) if rows else {},
        })


# =============================================================================
# EVALUATION RESULT VIEWS
# =============================================================================

class EvaluationResultViewSet(ReadOnlyModelViewSet):
    """
    Provides:
    - GET /api/v1/results/ - All evaluation rows (filter by pathway, pool,
      game, seed, variant, epoch_min/epoch_max, run)
    - GET /api/v1/results/{id}/ - One row
    """

    queryset = EvaluationResult.objects.select_related('run')
    serializer_class = EvaluationResultSerializer
    pagination_class = StandardResultsSetPagination
    filter_backends = [DjangoFilterBackend, filters.OrderingFilter]
    filterset_class = EvaluationResultFilter
    ordering_fields = ['epoch', 'mean_delta_r', 'seed', 'pathway', 'created_at']
    ordering = ['run', 'epoch', 'pathway', 'pool']


# =============================================================================
# CATALOG ENDPOINTS
# =============================================================================

@api_view(['GET'])
def strategy_catalog(request):
    """
    Strategy library with the default old/new pool split
    GET /api/v1/strategies/
    """
    entries = []
    for strategy_id, strategy in CATALOG.items():
        pool = 'old' if strategy_id in DEFAULT_POOL.old else 'new' if strategy_id in DEFAULT_POOL.new else None
        entries.append({**strategy.as_dict(), 'pool': pool})
    return Response({
        'count': len(entries),
        'default_pool': DEFAULT_POOL.as_dict(),
        'strategies': StrategySerializer(entries, many=True).data,
    })


@api_view(['GET'])
def game_catalog(request):
    """
    Built-in payoff tables, rewards as [row player, column player]
    GET /api/v1/games/
    """
    games = [{**matrix.as_dict(), 'actions': matrix.size} for matrix in BUILTIN_GAMES.values()]
    return Response(GameSerializer(games, many=True).data)


# =============================================================================
# UTILITY ENDPOINTS
# =============================================================================

@api_view(['GET'])
def health_check(request):
    """
    Health check endpoint for monitoring and load balancers
    GET /api/v1/health/
    """
    try:
        health_data = {
            'status': 'healthy',
            'service': 'adaptlab',
            'database': 'connected',
            'data': {
                'runs': ExperimentRun.objects.count(),
                'results': EvaluationResult.objects.count(),
            },
            'timestamp': timezone.now().isoformat()
        }
        return Response(health_data, status=status.HTTP_200_OK)

    except Exception as e:
        logger.error(f"Health check failed: {e}")
        error_data = {
            'status': 'unhealthy',
            'service': 'adaptlab',
            'error': str(e),
            'timestamp': timezone.now().isoformat()
        }
        return Response(error_data, status=status.HTTP_503_SERVICE_UNAVAILABLE)
