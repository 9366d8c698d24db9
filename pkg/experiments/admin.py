# experiments/admin.py
# Admin registrations for experiment runs and their evaluation rows

from django.contrib import admin

from .models import EvaluationResult, ExperimentRun


class EvaluationResultInline(admin.TabularInline):
    model = EvaluationResult
    extra = 0
    can_delete = False
    fields = ['epoch', 'pathway', 'pool', 'variant', 'mean_delta_r', 'stderr', 'games']
    readonly_fields = fields
    ordering = ['epoch', 'pathway', 'pool']

    def has_add_permission(self, request, obj=None):
        return False


@admin.register(ExperimentRun)
class ExperimentRunAdmin(admin.ModelAdmin):
    """
    Admin for harness runs. Everything except notes is written by the
    management commands, so most fields are read-only.
    """

    list_display = [
        'id',
        'command',
        'game',
        'pathway',
        'oae_mode',
        'seed',
        'status',
        'created_at',
    ]

    list_filter = [
        'command',
        'status',
        'game',
        'pathway',
        'created_at',
    ]

    search_fields = [
        'game',
        'pathway',
        'output_dir',
        'checkpoint_hash',
        'oae_hash',
        'notes',
    ]

    readonly_fields = [
        'id',
        'command',
        'status',
        'game',
        'pathway',
        'oae_mode',
        'seed',
        'config',
        'output_dir',
        'checkpoint_hash',
        'oae_hash',
        'created_at',
        'started_at',
        'completed_at',
        'error_log',
    ]

    fieldsets = (
        ('Run', {
            'fields': (
                'command',
                'status',
                'game',
                'pathway',
                'oae_mode',
                'seed',
            )
        }),
        ('Outputs', {
            'fields': (
                'output_dir',
                'checkpoint_hash',
                'oae_hash',
            )
        }),
        ('Configuration', {
            'fields': ('config',),
            'classes': ('collapse',)
        }),
        ('Timing & Errors', {
            'fields': (
                'created_at',
                'started_at',
                'completed_at',
                'error_log',
            ),
            'classes': ('collapse',)
        }),
        ('Notes', {
            'fields': ('notes',)
        }),
    )

    inlines = [EvaluationResultInline]
    show_facets = admin.ShowFacets.ALWAYS


@admin.register(EvaluationResult)
class EvaluationResultAdmin(admin.ModelAdmin):

    list_display = [
        'run',
        'game',
        'pathway',
        'pool',
        'variant',
        'epoch',
        'mean_delta_r',
        'stderr',
        'games',
        'seed',
    ]

    list_filter = [
        'game',
        'pathway',
        'pool',
        'variant',
    ]

    search_fields = ['pathway', 'game']
    readonly_fields = ['created_at']
    list_select_related = ['run']
