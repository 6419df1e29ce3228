from django.apps import AppConfig


class PositioningConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'positioning'
    verbose_name = 'FTM positioning experiments'
