"""
Experiments URLs - adaptlab API
URL routing for the read-only experiment API.
"""

from django.urls import include, path
from rest_framework.routers import DefaultRouter

from . import views

# =============================================================================
# DRF ROUTER CONFIGURATION
# =============================================================================

router = DefaultRouter()
router.register(r'runs', views.ExperimentRunViewSet, basename='run')
router.register(r'results', views.EvaluationResultViewSet, basename='result')

# =============================================================================
# API URL PATTERNS
# =============================================================================

api_urlpatterns = [
    # Health and utility endpoints
    path('health/', views.health_check, name='health-check'),

    # Catalogs served from the services package
    path('strategies/', views.strategy_catalog, name='strategy-catalog'),
    path('games/', views.game_catalog, name='game-catalog'),
]

# =============================================================================
# URL PATTERNS EXPORT
# =============================================================================

urlpatterns = [
    path('', include(router.urls)),
    path('', include(api_urlpatterns)),
]

# =============================================================================
# URL PATTERN REFERENCE
# =============================================================================

"""
Complete URL Pattern Reference (generated by router + custom patterns):

RUNS:
=====
GET    /api/v1/runs/                       # List runs (filter: command, status, game, pathway, seed)
GET    /api/v1/runs/{id}/                  # Run detail (config, fingerprints, error log)
GET    /api/v1/runs/{id}/results/          # Evaluation rows of the run
GET    /api/v1/runs/{id}/summary/          # Final-block summary {game: {pathway: {old, new}}}

RESULTS:
========
GET    /api/v1/results/                    # All rows (filter: pathway, pathways, pool, game, seed,
                                           #   variant, epoch_min, epoch_max, run; ordering)
GET    /api/v1/results/{id}/               # One row

CATALOGS:
=========
GET    /api/v1/strategies/                 # Strategy library and default old/new split
GET    /api/v1/games/                      # Built-in payoff tables

UTILITY:
========
GET    /api/v1/health/                     # Health check
"""
