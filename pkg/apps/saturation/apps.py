from django.apps import AppConfig


class SaturationConfig(AppConfig):
    name = 'apps.saturation'
    verbose_name = 'Actuator saturation'
