"""
Experiment models for adaptlab.

Records what the harness did so runs can be browsed in the admin and through
the read-only API. The computational core never touches these tables; the
management commands write them around each harness call.

Key Features:
- ExperimentRun lifecycle tracking (PENDING → RUNNING → COMPLETED | FAILED)
- Resolved configuration and checkpoint fingerprints stored per run
- Error log entries appended whenever a command fails
- EvaluationResult rows mirroring the harness result files
"""

import logging

from django.db import models
from django.utils import timezone

logger = logging.getLogger(__name__)

# Unsigned 64-bit seeds above this do not fit a signed BIGINT column.
MAX_STORED_SEED = 2 ** 63 - 1


def storable_seed(seed):
    if seed is None or int(seed) > MAX_STORED_SEED:
        return None
    return int(seed)


# =============================================================================
# EXPERIMENT RUN MODEL
# =============================================================================

class ExperimentRun(models.Model):
    """
    One invocation of a harness command.

    Business Rules:
    - Every command that trains, evaluates or writes artifacts creates a run
    - The resolved config is stored verbatim so the run can be repeated
    - A failed run keeps its partial results and an error log entry
    """

    COMMANDS = [
        ('populate_memory', 'Populate Memory'),
        ('train_oae', 'Train Estimator'),
        ('train', 'Train Policy'),
        ('eval', 'Evaluate Agent'),
        ('transfer', 'Cross-Game Transfer'),
        ('table', 'Comparison Grid'),
    ]

    RUN_STATUS = [
        ('PENDING', 'Pending'),
        ('RUNNING', 'Running'),
        ('COMPLETED', 'Completed'),
        ('FAILED', 'Failed'),
    ]

    # =============================================================================
    # CORE FIELDS
    # =============================================================================

    command = models.CharField(
        max_length=20,
        choices=COMMANDS,
        help_text="Harness command that produced this run"
    )
    status = models.CharField(
        max_length=20,
        choices=RUN_STATUS,
        default='PENDING',
        help_text="Current lifecycle status"
    )
    game = models.CharField(
        max_length=100,
        help_text="Game the run was played on"
    )
    pathway = models.CharField(
        max_length=20,
        blank=True,
        help_text="Policy pathway id (blank for memory and estimator runs)"
    )
    oae_mode = models.CharField(
        max_length=20,
        blank=True,
        help_text="Estimator mode, when an estimator is involved"
    )
    seed = models.PositiveBigIntegerField(
        blank=True,
        null=True,
        help_text="Master seed (null when it exceeds the column range; see config)"
    )

    # =============================================================================
    # OUTPUTS
    # =============================================================================

    config = models.JSONField(
        default=dict,
        blank=True,
        help_text="Fully resolved experiment configuration"
    )
    output_dir = models.CharField(
        max_length=500,
        blank=True,
        help_text="Directory holding the run's files"
    )
    checkpoint_hash = models.CharField(
        max_length=64,
        blank=True,
        help_text="SHA256 fingerprint of the produced agent or estimator"
    )
    oae_hash = models.CharField(
        max_length=64,
        blank=True,
        help_text="SHA256 fingerprint of the frozen estimator used"
    )

    # =============================================================================
    # TIMESTAMPS AND ERRORS
    # =============================================================================

    created_at = models.DateTimeField(auto_now_add=True)
    started_at = models.DateTimeField(
        blank=True,
        null=True,
        help_text="When the harness call began"
    )
    completed_at = models.DateTimeField(
        blank=True,
        null=True,
        help_text="When the harness call finished (success or failure)"
    )
    error_log = models.JSONField(
        default=dict,
        blank=True,
        help_text="Errors raised while the run was executing"
    )
    notes = models.TextField(
        blank=True,
        help_text="Free-form notes"
    )

    # =============================================================================
    # MODEL METHODS
    # =============================================================================

    def mark_started(self):
        self.started_at = timezone.now()
        self.status = 'RUNNING'
        self.save()

    def mark_completed(self, success=True):
        self.completed_at = timezone.now()
        self.status = 'COMPLETED' if success else 'FAILED'
        self.save()

    def add_error(self, error_type, message, details=None):
        if 'errors' not in self.error_log:
            self.error_log['errors'] = []
        self.error_log['errors'].append({
            'timestamp': timezone.now().isoformat(),
            'type': error_type,
            'message': message,
            'details': details or {},
        })
        self.save()

    def get_duration(self):
        """Run duration in seconds."""
        if self.started_at and self.completed_at:
            return (self.completed_at - self.started_at).total_seconds()
        return None

    def get_summary_stats(self):
        return {
            'status': self.status,
            'duration': self.get_duration(),
            'results': self.results.count(),
            'errors': len(self.error_log.get('errors', [])),
        }

    class Meta:
        db_table = 'experiment_runs'
        ordering = ['-created_at']
        verbose_name = 'Experiment Run'
        verbose_name_plural = 'Experiment Runs'

        indexes = [
            models.Index(fields=['status', 'created_at'], name='run_status_created_idx'),
            models.Index(fields=['command', 'created_at'], name='run_command_created_idx'),
            models.Index(fields=['game', 'pathway'], name='run_game_pathway_idx'),
        ]

    def __str__(self):
        label = self.pathway or self.oae_mode or self.game
        return f"{self.get_command_display()} - {label} seed {self.seed} ({self.get_status_display()})"

    def __repr__(self):
        return f"<ExperimentRun: {self.command} - {self.status}>"


# =============================================================================
# EVALUATION RESULT MODEL
# =============================================================================

class EvaluationResult(models.Model):
    """One evaluation block against one strategy pool."""

    POOLS = [
        ('old', 'Old Strategies'),
        ('new', 'New Strategies'),
    ]

    run = models.ForeignKey(
        ExperimentRun,
        on_delete=models.CASCADE,
        related_name='results',
        help_text="Run that produced this row"
    )
    pathway = models.CharField(max_length=20, help_text="Policy pathway id")
    pool = models.CharField(max_length=3, choices=POOLS, help_text="Opponent pool evaluated against")
    mean_delta_r = models.FloatField(help_text="Mean score difference over the evaluation games")
    stderr = models.FloatField(help_text="Standard error of the mean score difference")
    games = models.PositiveIntegerField(help_text="Evaluation games counted")
    seed = models.PositiveBigIntegerField(blank=True, null=True, help_text="Master seed of the run")
    game = models.CharField(max_length=100, help_text="Game evaluated on")
    epoch = models.PositiveIntegerField(default=0, help_text="Training epoch of the evaluation block")
    variant = models.CharField(
        max_length=20,
        blank=True,
        help_text="Estimator provenance for transfer rows (new_trained or reused)"
    )
    created_at = models.DateTimeField(auto_now_add=True)

    @classmethod
    def from_row(cls, run, row):
        return cls(
            run=run,
            pathway=row.pathway,
            pool=row.pool,
            mean_delta_r=row.mean_delta_r,
            stderr=row.stderr,
            games=row.games,
            seed=storable_seed(row.seed),
            game=row.game,
            epoch=row.epoch,
            variant=row.variant,
        )

    class Meta:
        db_table = 'evaluation_results'
        ordering = ['run', 'epoch', 'pathway', 'pool']
        verbose_name = 'Evaluation Result'
        verbose_name_plural = 'Evaluation Results'

        indexes = [
            models.Index(fields=['game', 'pathway', 'pool'], name='result_game_pathway_pool_idx'),
            models.Index(fields=['run', 'epoch'], name='result_run_epoch_idx'),
        ]

    def __str__(self):
        return f"{self.pathway} {self.pool} @ {self.epoch}: {self.mean_delta_r:+.3f}"

    def __repr__(self):
        return f"<EvaluationResult: {self.pathway} {self.pool} epoch {self.epoch}>"
