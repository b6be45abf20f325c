"""
Best-effort run ledger on top of ExperimentRun.
"""
import logging
from typing import Optional

from django.db import DatabaseError
from django.utils import timezone

from .models import ExperimentRun

logger = logging.getLogger(__name__)


class RunRecorder:
    """
    Records one command run in the ledger.

    A missing table or unreachable database only disables recording; the
    command itself carries on.
    """

    def __init__(self, command: str, config: dict):
        self.command = command
        self.config = config
        self.run: Optional[ExperimentRun] = None

    def start(self) -> Optional[ExperimentRun]:
        try:
            self.run = ExperimentRun.objects.create(command=self.command, config=self.config)
        except DatabaseError as e:
            logger.warning(f"Run ledger unavailable, continuing without it: {e}")
            self.run = None
        return self.run

    def _finish(self, **fields):
        if self.run is None:
            return
        for name, value in fields.items():
            setattr(self.run, name, value)
        self.run.completed_at = timezone.now()
        try:
            self.run.save()
        except DatabaseError as e:
            logger.warning(f"Could not update run {self.run.pk} in the ledger: {e}")

    def succeed(self, metrics: Optional[dict] = None, preparation_seconds: Optional[float] = None,
                training_seconds: Optional[float] = None):
        self._finish(
            status='succeeded',
            metrics=metrics or {},
            preparation_seconds=preparation_seconds,
            training_seconds=training_seconds,
        )

    def fail(self, message: str):
        self._finish(status='failed', error_message=message)
