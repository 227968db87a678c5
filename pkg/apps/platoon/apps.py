from django.apps import AppConfig


class PlatoonConfig(AppConfig):
    name = 'apps.platoon'
    verbose_name = 'Platoon model'
