"""
Management command to project a dataset onto its top two principal components.

Usage:
    python manage.py project --data <dataset.csv> --out <projection.csv> [--plot <projection.png>]

Example:
    python manage.py project --data smote.csv --out smote_pca.csv --plot smote_pca.png --normalize
"""
from pathlib import Path

from experiments.datasets import label_column, normalize_apply, normalize_fit, read_origins
from experiments.management.base import KnnCommand, RunOutcome
from experiments.projection import pca_project, plot_projection, write_projection_csv
from experiments.runconfig import add_data_arguments, add_format_argument


class Command(KnnCommand):
    help = 'Write the 2-D PCA projection of a dataset (and optionally a scatter plot)'
    command_name = 'project'

    def add_arguments(self, parser):
        add_data_arguments(parser, help_text='Dataset or augmented dataset file')
        add_format_argument(parser)
        parser.add_argument('--normalize', action='store_true', help='Z-score features before projecting')
        parser.add_argument('--out', type=Path, required=True, help='Projection csv to write')
        parser.add_argument('--plot', type=Path, default=None, help='Also render a PNG scatter plot')

    def run(self, config):
        options = config.options
        dataset = self.load(options['data'], options)
        if options['normalize']:
            dataset = normalize_apply(normalize_fit(dataset), dataset)
        origins = read_origins(options['data']) if options['format'] == 'csv' else None
        projection = pca_project(dataset.features)
        labels = label_column(dataset.label_values, dataset.labels)

        write_projection_csv(options['out'], projection, labels, origins)
        if options['plot'] is not None:
            plot_projection(options['plot'], projection, labels, origins)
        return RunOutcome(metrics={
            'samples': dataset.size,
            'dim': dataset.dim,
            'variances': projection.variances.tolist(),
        })
