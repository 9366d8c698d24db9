#!/usr/bin/env python
"""
Django's command-line utility for administrative tasks.

adaptlab Management Script
==========================

Entry point for the experiment harness and the usual Django tasks.

Harness Commands:
=================
  python manage.py list_strategies                          # Strategy library and pool split
  python manage.py populate_memory --game chicken --seed 1  # Warm-up games -> memory.jsonl
  python manage.py train_oae --oae-mode one_step            # Pre-train and freeze the estimator
  python manage.py train --pathway o_oae_he_ad --seed 1     # Train a pathway with periodic evaluation
  python manage.py eval --agent <agent.ckpt> --oae <oae.ckpt> --memory <memory.jsonl>
  python manage.py transfer --source-game prisoners_dilemma --game chicken
  python manage.py table --game prisoners_dilemma --workers 4

Every harness command accepts --config <file.yaml> plus flag overrides and
writes its resolved config.yaml next to its outputs under --output-dir.

Database Operations:
  python manage.py migrate                     # Apply migrations
  python manage.py createsuperuser             # Admin user for browsing runs

Development Tools:
  python manage.py runserver                   # Read-only experiment API under /api/v1/
  python manage.py test                        # Run tests (ADAPTLAB_SLOW_TESTS=1 for acceptance runs)
  python manage.py check                       # System check
"""

import os
import sys


def main():
    """Run administrative tasks."""
    os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'adaptlab.settings')

    try:
        from django.core.management import execute_from_command_line
    except ImportError as exc:
        raise ImportError(
            "Couldn't import Django. Are you sure it's installed and "
            "available on your PYTHONPATH environment variable? Did you "
            "forget to activate a virtual environment?"
        ) from exc

    execute_from_command_line(sys.argv)


if __name__ == '__main__':
    main()
