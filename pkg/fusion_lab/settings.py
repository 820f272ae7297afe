"""
Fusion Lab - Django project configuration.
"""

import os
from pathlib import Path

from dotenv import load_dotenv

load_dotenv()

BASE_DIR = Path(__file__).resolve().parent.parent

SECRET_KEY = os.getenv("DJANGO_SECRET_KEY", "django-insecure-dev-key-change-this")

DEBUG = os.getenv("DJANGO_DEBUG", "False") == "True"

INSTALLED_APPS = [
    "django.contrib.contenttypes",
    "bayes_fusion",
]

DATABASES = {
    "default": {
        "ENGINE": "django.db.backends.sqlite3",
        "NAME": os.getenv("FUSION_DB_PATH", str(BASE_DIR / "db.sqlite3")),
    }
}

USE_TZ = True

TIME_ZONE = "UTC"

DEFAULT_AUTO_FIELD = "django.db.models.BigAutoField"

# Fusion engine configuration
FUSION_DEFAULT_SEED = int(os.getenv("FUSION_DEFAULT_SEED", "20141016"))
FUSION_MAX_WORKERS = int(os.getenv("FUSION_MAX_WORKERS", "4"))
FUSION_CHUNK_SIZE = int(os.getenv("FUSION_CHUNK_SIZE", "16384"))
FUSION_OUTPUT_DIR = Path(os.getenv("FUSION_OUTPUT_DIR", str(BASE_DIR / "runs")))
FUSION_RECORD_RUNS = os.getenv("FUSION_RECORD_RUNS", "True") == "True"
FUSION_DEFAULT_CONFIDENCE = float(os.getenv("FUSION_DEFAULT_CONFIDENCE", "0.95"))

# Logging configuration
FUSION_LOG_LEVEL = os.getenv("FUSION_LOG_LEVEL", "INFO")
FUSION_LOG_FILE = os.getenv("FUSION_LOG_FILE", "")

_log_handlers = ["console"]

LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "verbose": {
            "format": "{levelname} {asctime} {module} {message}",
            "style": "{",
        },
    },
    "handlers": {
        "console": {
            "class": "logging.StreamHandler",
            "formatter": "verbose",
        },
    },
    "loggers": {
        "bayes_fusion": {
            "handlers": _log_handlers,
            "level": FUSION_LOG_LEVEL,
            "propagate": False,
        },
    },
}

if FUSION_LOG_FILE:
    LOGGING["handlers"]["file"] = {  # type: ignore[index]
        "class": "logging.FileHandler",
        "filename": FUSION_LOG_FILE,
        "formatter": "verbose",
    }
    _log_handlers.append("file")
