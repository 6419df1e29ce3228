from django.contrib import admin
from .models import ExperimentRun, RstaSample


class RstaSampleInline(admin.TabularInline):
    model = RstaSample
    extra = 0
    fields = ('rsta_label', 'repetition', 'aoa_error_deg', 'position_error_cm', 'distance_error_cm',
              'los_likelihood')
    readonly_fields = fields
    can_delete = False


@admin.register(ExperimentRun)
class ExperimentRunAdmin(admin.ModelAdmin):
    list_display = ('name', 'command', 'status', 'seed', 'repetitions', 'legacy_mismatch', 'created_at')
    list_filter = ('command', 'status', 'legacy_mismatch', 'created_at')
    search_fields = ('name', 'seed')
    readonly_fields = ('id', 'created_at', 'completed_at', 'progress_display')
    ordering = ('-created_at',)
    inlines = [RstaSampleInline]

    fieldsets = (
        ('Run', {
            'fields': ('id', 'name', 'command', 'status', 'progress_display', 'error_message')
        }),
        ('Parameters', {
            'fields': ('seed', 'repetitions', 'legacy_mismatch')
        }),
        ('Results', {
            'fields': ('summary', 'csv_path', 'created_at', 'completed_at')
        }),
        ('Scenario', {
            'fields': ('config',),
            'classes': ('collapse',)
        })
    )

    @admin.display(description='Progress')
    def progress_display(self, obj):
        progress = obj.progress
        if not progress:
            return '-'
        return f"{progress['progress']}% {progress['stage']} {progress['status']}"


@admin.register(RstaSample)
class RstaSampleAdmin(admin.ModelAdmin):
    list_display = ('run', 'rsta_label', 'repetition', 'position_error_cm', 'distance_error_cm', 'los_likelihood')
    list_filter = ('rsta_label',)
    search_fields = ('rsta_label', 'run__name')
    ordering = ('run', 'rsta_label', 'repetition')
