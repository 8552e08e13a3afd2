from django.apps import AppConfig


class FootprintsConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'footprints'
    verbose_name = "Building footprint cascade"
