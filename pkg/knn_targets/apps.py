from django.apps import AppConfig


class KnnTargetsConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'knn_targets'
    verbose_name = 'Nearest-neighbor target generation'
