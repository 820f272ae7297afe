"""
Bayes Fusion App Configuration.
"""

from django.apps import AppConfig


class BayesFusionConfig(AppConfig):
    """Configuration for the Bayes Fusion application."""

    default_auto_field = "django.db.models.BigAutoField"
    name = "bayes_fusion"
    verbose_name = "Deterministic Bayesian Fusion Engine"
