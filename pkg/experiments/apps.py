"""
Experiments App Configuration - adaptlab
Django app configuration for the experiments application.

Handles app initialization and signal registration.
"""

from django.apps import AppConfig


class ExperimentsConfig(AppConfig):
    """
    Configuration for the Experiments app.

    This app manages:
    - Experiment run records written by the harness management commands
    - Evaluation rows mirroring results.csv
    - The read-only experiment API and admin registrations
    """

    default_auto_field = 'django.db.models.BigAutoField'
    name = 'experiments'
    verbose_name = 'Experiments & Results'

    def ready(self):
        # Import signals to register them
        from . import signals  # noqa: F401
