"""
URL configuration for the adaptlab project.

URL Structure:
- /admin/                         - Django admin (experiment runs, results)
- /api/v1/                        - Read-only experiment API (see experiments.urls)
- /api/v1/health/                 - Health check
"""

from django.contrib import admin
from django.urls import path, include


# =============================================================================
# MAIN URL PATTERNS
# =============================================================================

urlpatterns = [
    path('admin/', admin.site.urls),
    path('api/v1/', include('experiments.urls')),
]
