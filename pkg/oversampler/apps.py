from django.apps import AppConfig


class OversamplerConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'oversampler'
    verbose_name = 'Minority-class oversampling'
