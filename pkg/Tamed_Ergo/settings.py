"""
Django settings for the Tamed_Ergo project.

The project has no web surface: Django provides the command-line layer
(management commands), configuration validation (forms), logging
configuration and the test runner.

For the full list of settings and their values, see
https://docs.djangoproject.com/en/5.2/ref/settings/
"""

import os
from pathlib import Path

from dotenv import load_dotenv

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

load_dotenv(BASE_DIR / ".env")


# No sessions, cookies or signing are used; the key only satisfies Django's startup checks.
SECRET_KEY = os.getenv("TAMED_ERGO_SECRET_KEY", "tamed-ergo-offline-cli")

DEBUG = bool(os.getenv("TAMED_ERGO_DEBUG"))

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    "Ergodic_Lab",
]

# Simulation results are persisted as CSV/JSON files, never in a database.
DATABASES = {}


# Internationalization
# https://docs.djangoproject.com/en/5.2/topics/i18n/

LANGUAGE_CODE = "en-us"

TIME_ZONE = "UTC"

USE_I18N = True

USE_TZ = True


# Simulation defaults. Every value ends up in the header of persisted artifacts.

TAMED_ERGO = {
    "ALPHA": 1.0,
    "DT_CAP": 1.0,
    "OVERFLOW_THRESHOLD": 1e10,
    "WORKERS": int(os.getenv("TAMED_ERGO_WORKERS") or os.cpu_count() or 1),
    "BATCH_SIZE": 4096,
    "PATHS": 1000,
    "SEED": 0,
    "OUTPUT_DIR": "results",
}


# Logging
# https://docs.djangoproject.com/en/5.2/topics/logging/

LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "plain": {
            "format": "%(asctime)s %(levelname)s %(name)s: %(message)s",
        },
    },
    "handlers": {
        "console": {
            "class": "logging.StreamHandler",
            "formatter": "plain",
        },
    },
    "loggers": {
        "Ergodic_Lab": {
            "handlers": ["console"],
            "level": "DEBUG" if DEBUG else os.getenv("TAMED_ERGO_LOG_LEVEL", "INFO"),
            "propagate": False,
        },
    },
}
