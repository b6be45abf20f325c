from django.apps import AppConfig


class TrainingEvalConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'training_eval'
    verbose_name = 'Training and evaluation'
