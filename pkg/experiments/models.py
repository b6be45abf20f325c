from django.db import models


class ExperimentRun(models.Model):
    """Ledger entry for one management-command invocation."""

    STATUS_CHOICES = [
        ('running', 'Running'),
        ('succeeded', 'Succeeded'),
        ('failed', 'Failed'),
    ]

    command = models.CharField(
        max_length=50,
        help_text='Management command that was run (e.g., prepare, train, eval)'
    )
    status = models.CharField(
        max_length=10,
        choices=STATUS_CHOICES,
        default='running',
        help_text='Current status of the run'
    )
    config = models.JSONField(
        default=dict,
        help_text='Effective configuration of the run'
    )
    metrics = models.JSONField(
        default=dict,
        blank=True,
        help_text='Metrics reported by the run'
    )
    preparation_seconds = models.FloatField(
        null=True,
        blank=True,
        help_text='Wall time spent preparing neighbor targets'
    )
    training_seconds = models.FloatField(
        null=True,
        blank=True,
        help_text='Wall time spent training'
    )
    error_message = models.TextField(
        blank=True,
        help_text='Error message if the run failed'
    )
    created_at = models.DateTimeField(
        auto_now_add=True,
        help_text='When the run started'
    )
    completed_at = models.DateTimeField(
        null=True,
        blank=True,
        help_text='When the run finished'
    )

    class Meta:
        ordering = ['-created_at']
        indexes = [
            models.Index(fields=['command', 'created_at'], name='experiments_command_0f5d2c_idx'),
            models.Index(fields=['status'], name='experiments_status_8a1e4b_idx'),
        ]
        verbose_name = 'Experiment Run'
        verbose_name_plural = 'Experiment Runs'

    def __str__(self):
        return f"{self.command} ({self.status}) at {self.created_at}"
