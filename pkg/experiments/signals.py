"""
Experiments Signals - adaptlab
Django signals for run bookkeeping.

Handles:
- Normalizing identifiers before runs and results are saved
- Status transition logging for the audit trail
"""

import logging

from django.db.models.signals import post_save, pre_save
from django.dispatch import receiver

from .models import EvaluationResult, ExperimentRun

logger = logging.getLogger(__name__)


@receiver(pre_save, sender=ExperimentRun)
def normalize_run_fields(sender, instance, **kwargs):
    """Lower-case identifiers and remember the stored status for transition logging."""
    instance.game = (instance.game or '').strip().lower()
    instance.pathway = (instance.pathway or '').strip().lower()
    instance.oae_mode = (instance.oae_mode or '').strip().lower()

    previous = None
    if instance.pk:
        previous = ExperimentRun.objects.filter(pk=instance.pk).values_list('status', flat=True).first()
    instance._previous_status = previous


@receiver(post_save, sender=ExperimentRun)
def log_run_status_changes(sender, instance, created, **kwargs):
    previous = getattr(instance, '_previous_status', None)
    if created:
        logger.info(f"Created run {instance.pk}: {instance.command} on '{instance.game}'")
    elif previous != instance.status:
        if instance.status == 'FAILED':
            logger.error(f"Run {instance.pk} ({instance.command}) failed after {instance.get_duration()}s")
        else:
            logger.info(f"Run {instance.pk} ({instance.command}): {previous} -> {instance.status}")


@receiver(pre_save, sender=EvaluationResult)
def validate_evaluation_result(sender, instance, **kwargs):
    """
    Enforce result rules before saving
    """
    if instance.games < 1:
        raise ValueError("An evaluation result must count at least one game")
    if instance.stderr < 0:
        raise ValueError("Standard error cannot be negative")
    if not instance.game:
        instance.game = instance.run.game
