from django.apps import AppConfig


class MemnetKnnConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'memnet_knn'
    verbose_name = 'Memory-network kNN models'
