from django.db import models, transaction
from django.utils import timezone
import uuid
from .utils import RunProgress


class ExperimentRun(models.Model):
    """One scenario run, saved from a management command with --save"""

    COMMAND_CHOICES = [
        ('simulate', 'Simulate scenario'),
        ('reproduce_fig4', 'Room experiment'),
        ('compare', 'Technology comparison'),
    ]

    STATUS_CHOICES = [
        ('running', 'Running'),
        ('completed', 'Completed'),
        ('failed', 'Failed'),
    ]

    id = models.UUIDField(primary_key=True, default=uuid.uuid4, editable=False)
    name = models.CharField(max_length=100)
    command = models.CharField(max_length=20, choices=COMMAND_CHOICES, default='simulate')
    status = models.CharField(max_length=20, choices=STATUS_CHOICES, default='running')

    # stored as text: seeds span the full unsigned 64-bit range
    seed = models.CharField(max_length=20, default='0')
    repetitions = models.PositiveIntegerField(default=1)
    legacy_mismatch = models.BooleanField(default=False)
    config = models.JSONField(default=dict, blank=True)

    summary = models.JSONField(default=dict, blank=True)  # label -> percentile row
    csv_path = models.CharField(max_length=500, blank=True)
    error_message = models.TextField(blank=True)

    created_at = models.DateTimeField(auto_now_add=True)
    completed_at = models.DateTimeField(null=True, blank=True)

    class Meta:
        ordering = ['-created_at']

    def __str__(self):
        return f"{self.name} ({self.get_command_display()}, seed {self.seed}) - {self.status}"

    @classmethod
    def start(cls, config, command='simulate'):
        """Create the run in the running state, before any session is simulated"""
        return cls.objects.create(
            name=config.name,
            command=command,
            status='running',
            seed=str(config.seed),
            repetitions=config.repetitions,
            legacy_mismatch=config.legacy_mismatch,
            config=config.to_dict(),
        )

    @classmethod
    def from_result(cls, config, result, command='simulate', csv_path=''):
        """Persist a finished run with one RstaSample per (RSTA, repetition)"""
        with transaction.atomic():
            run = cls.start(config, command)
            run.complete(result, csv_path)
        return run

    def complete(self, result, csv_path=''):
        """Store the percentile summary and the samples, then mark the run completed"""
        from .services.solver import percentile_report

        summary = {}
        for label in result.per_rsta:
            row = percentile_report(result.errors_cm(label), label=label)
            summary[label] = {str(p): v for p, v in row.values.items()}

        with transaction.atomic():
            self.name = result.name or self.name
            self.summary = summary
            self.csv_path = str(csv_path)
            self.status = 'completed'
            self.completed_at = timezone.now()
            self.save(update_fields=['name', 'summary', 'csv_path', 'status', 'completed_at'])
            RstaSample.objects.bulk_create([
                RstaSample(run=self, rsta_label=label, repetition=repetition, **outcome._asdict())
                for label, outcomes in result.per_rsta.items()
                for repetition, outcome in enumerate(outcomes)
            ])
        RunProgress.cleanup_progress(str(self.id))

    def mark_failed(self, error_message):
        self.status = 'failed'
        self.error_message = error_message
        self.completed_at = timezone.now()
        self.save(update_fields=['status', 'error_message', 'completed_at'])
        RunProgress.cleanup_progress(str(self.id))

    @property
    def progress(self):
        """Live progress of a running run, None once it has finished"""
        if self.status != 'running':
            return None
        return RunProgress.get_progress(str(self.id))


class RstaSample(models.Model):
    """Outcome of one session with one RSTA"""
    run = models.ForeignKey(ExperimentRun, on_delete=models.CASCADE, related_name='samples')
    rsta_label = models.CharField(max_length=100)
    repetition = models.PositiveIntegerField()
    aoa_error_deg = models.FloatField()
    position_error_cm = models.FloatField()
    distance_error_cm = models.FloatField()
    los_likelihood = models.FloatField()

    class Meta:
        ordering = ['rsta_label', 'repetition']
        constraints = [
            models.UniqueConstraint(fields=['run', 'rsta_label', 'repetition'], name='unique_rsta_sample'),
        ]

    def __str__(self):
        return f"{self.rsta_label} #{self.repetition}: {self.position_error_cm:.2f} cm"

    @property
    def is_los(self):
        return self.los_likelihood >= 0.5
