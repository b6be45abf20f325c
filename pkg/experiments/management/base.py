"""
Shared behavior of the experiment management commands: effective-config
logging, the run ledger and error translation to CommandError.
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from django.core.management.base import BaseCommand, CommandError

from diffcore.exceptions import FormatError, KnnError
from experiments.datasets import align_labels, load_dataset, normalize_apply
from experiments.formats import metrics_json, write_metrics
from experiments.recorder import RunRecorder
from experiments.runconfig import RunConfig
from knn_targets.types import Dataset, NormalizationStats

logger = logging.getLogger(__name__)


@dataclass
class RunOutcome:
    """What a command reports: deterministic metrics plus wall-clock timings."""

    metrics: dict = field(default_factory=dict)
    preparation_seconds: Optional[float] = None
    training_seconds: Optional[float] = None


def mean_of_runs(runs: list, keys=('macro_f1', 'accuracy')) -> dict:
    return {key: float(np.mean([run[key] for run in runs])) for key in keys}


class KnnCommand(BaseCommand):
    """
    Base class: subclasses implement ``configure`` and ``run``.

    Library errors (KnnError, ValueError, OSError) become CommandError, so
    the process exits non-zero with the message on stderr.
    """

    command_name = ''
    metrics_option: Optional[str] = None

    def configure(self, options: dict) -> RunConfig:
        return RunConfig.from_options(self.command_name, options)

    def run(self, config: RunConfig) -> RunOutcome:
        raise NotImplementedError

    def handle(self, *args, **options):
        try:
            config = self.configure(options)
        except (KnnError, ValueError) as e:
            raise CommandError(str(e))
        effective = config.to_json()
        logger.info(f"Effective configuration: {effective}")
        self.stdout.write(f"config {effective}")

        recorder = RunRecorder(self.command_name, config.to_dict())
        recorder.start()
        try:
            outcome = self.run(config)
        except CommandError as e:
            recorder.fail(str(e))
            raise
        except (KnnError, ValueError, OSError) as e:
            logger.error(f"{self.command_name} failed: {e}")
            recorder.fail(str(e))
            raise CommandError(str(e))

        recorder.succeed(outcome.metrics, outcome.preparation_seconds, outcome.training_seconds)
        if outcome.preparation_seconds is not None:
            self.stdout.write(f"preparation_seconds {outcome.preparation_seconds:.3f}")
        if outcome.training_seconds is not None:
            self.stdout.write(f"training_seconds {outcome.training_seconds:.3f}")
        if outcome.metrics:
            self.stdout.write(metrics_json(outcome.metrics), ending='')
            out = config.options.get(self.metrics_option) if self.metrics_option else None
            if out:
                write_metrics(out, outcome.metrics)
        self.stdout.write(self.style.SUCCESS(f"{self.command_name} finished"))

    def load(self, path: Path, options: dict, stats: Optional[NormalizationStats] = None,
             label_values: Optional[np.ndarray] = None) -> Dataset:
        """Read a dataset, express its labels in ``label_values`` and normalize with ``stats``."""
        dataset = load_dataset(path, options.get('format', 'csv'), options.get('dim'))
        if label_values is not None:
            dataset = align_labels(dataset, label_values)
        if stats is not None:
            if len(stats.mean) != dataset.dim:
                raise FormatError(f"{path}: {dataset.dim} features, the stored normalization expects {len(stats.mean)}")
            dataset = normalize_apply(stats, dataset)
        return dataset
