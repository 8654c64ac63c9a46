from django.apps import AppConfig


class ErgodicLabConfig(AppConfig):
    default_auto_field = "django.db.models.BigAutoField"
    name = "Ergodic_Lab"
    verbose_name = "Tamed Euler ergodic experiments"
