"""
WSGI config for the adaptlab project.

Exposes the module-level ``application`` used by ``runserver`` and by
gunicorn (``gunicorn adaptlab.wsgi:application``) when the results API is
served from a shared machine.
"""

import os
import sys
from pathlib import Path

from django.core.wsgi import get_wsgi_application

BASE_DIR = Path(__file__).resolve().parent.parent

# Add the project directory to Python path
sys.path.append(str(BASE_DIR))

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'adaptlab.settings')

django_application = get_wsgi_application()


def application(environ, start_response):
    """
    WSGI entry point with a fast path for load-balancer health probes.

    ``/wsgi-health/`` answers without touching Django or the database.
    """
    if environ.get('PATH_INFO') == '/wsgi-health/':
        start_response('200 OK', [
            ('Content-Type', 'application/json'),
            ('Cache-Control', 'no-cache'),
        ])
        return [b'{"status": "healthy", "service": "adaptlab-wsgi"}']

    return django_application(environ, start_response)
