from django.apps import AppConfig


class Seq2seqKnnConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'seq2seq_knn'
    verbose_name = 'Sequence-to-sequence kNN models'
