"""
API Serializers for adaptlab experiments.

Serializer classes for the read-only experiment API:
- List views (run summaries for tables)
- Detail views (resolved config, fingerprints, error log)
- Evaluation rows, strategy catalog entries and payoff tables

Key Features:
- Computed fields for run duration and result counts
- Human-readable pathway labels next to pathway ids
- Plain serializers for the in-memory catalog objects from services
"""

import logging

from rest_framework import serializers

from services.policy import Pathway

from .models import EvaluationResult, ExperimentRun

logger = logging.getLogger(__name__)


# =============================================================================
# EVALUATION RESULT SERIALIZERS
# =============================================================================

class EvaluationResultSerializer(serializers.ModelSerializer):
    """One evaluation block against one pool, as written to results.csv."""

    pathway_label = serializers.SerializerMethodField()

    class Meta:
        model = EvaluationResult
        fields = [
            'id',
            'run',
            'game',
            'pathway',
            'pathway_label',
            'pool',
            'variant',
            'epoch',
            'mean_delta_r',
            'stderr',
            'games',
            'seed',
            'created_at',
        ]
        read_only_fields = fields

    def get_pathway_label(self, obj):
        try:
            return Pathway(obj.pathway).label
        except ValueError:
            return obj.pathway


# =============================================================================
# EXPERIMENT RUN SERIALIZERS
# =============================================================================

class ExperimentRunListSerializer(serializers.ModelSerializer):
    """
    Summary serializer for run lists.

    Leaves out the resolved config and error log, which can be large.
    """

    duration = serializers.SerializerMethodField()
    result_count = serializers.SerializerMethodField()

    class Meta:
        model = ExperimentRun
        fields = [
            'id',
            'command',
            'status',
            'game',
            'pathway',
            'oae_mode',
            'seed',
            'output_dir',
            'created_at',
            'completed_at',
            'duration',
            'result_count',
        ]
        read_only_fields = fields

    def get_duration(self, obj):
        return obj.get_duration()

    def get_result_count(self, obj):
        # Annotated by the viewset; fall back to a query for single objects
        count = getattr(obj, 'result_count', None)
        return count if count is not None else obj.results.count()


class ExperimentRunDetailSerializer(ExperimentRunListSerializer):
    """Complete run record including config, fingerprints and errors."""

    summary = serializers.SerializerMethodField()

    class Meta(ExperimentRunListSerializer.Meta):
        fields = ExperimentRunListSerializer.Meta.fields + [
            'config',
            'checkpoint_hash',
            'oae_hash',
            'started_at',
            'error_log',
            'notes',
            'summary',
        ]
        read_only_fields = fields

    def get_summary(self, obj):
        return obj.get_summary_stats()


# =============================================================================
# CATALOG SERIALIZERS
# =============================================================================

class StrategySerializer(serializers.Serializer):
    id = serializers.CharField()
    name = serializers.CharField()
    description = serializers.CharField()
    stochastic = serializers.BooleanField()
    pool = serializers.CharField(allow_null=True)


class GameSerializer(serializers.Serializer):
    name = serializers.CharField()
    labels = serializers.ListField(child=serializers.CharField())
    payoffs = serializers.ListField(
        child=serializers.ListField(child=serializers.ListField(child=serializers.FloatField()))
    )
    actions = serializers.IntegerField()
