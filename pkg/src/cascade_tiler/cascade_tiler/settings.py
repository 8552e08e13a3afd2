"""
Django settings for the cascade_tiler project.

The project has no web surface; Django provides configuration, the
management-command CLI and the test runner for the ``footprints`` app.

For the full list of settings and their values, see
https://docs.djangoproject.com/en/5.2/ref/settings/
"""

import os
from pathlib import Path

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

# Only used by Django internals (signing); nothing here is served.
SECRET_KEY = os.getenv(
    "DJANGO_SECRET_KEY",
    'django-insecure-cascade-tiler-local-only',
)

DEBUG = os.getenv("DJANGO_DEBUG", "") == "1"

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    "footprints",
]

MIDDLEWARE = []

# No models: the pipeline reads and writes files only.
DATABASES = {}

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = False

USE_TZ = True

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'


# Logging

CASCADE_TILER_LOG_LEVEL = os.getenv("CASCADE_TILER_LOG_LEVEL", "INFO").upper()

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
    "root": {
        "handlers": ["console"],
        "level": CASCADE_TILER_LOG_LEVEL,
    },
}


# Pipeline defaults

_threads = (os.getenv("CASCADE_TILER_THREADS") or "").strip()
CASCADE_TILER_THREADS = int(_threads) if _threads else None

CASCADE_PAD_VALUE = int(os.getenv("CASCADE_PAD_VALUE", "255"))
CASCADE_MATCH_RADIUS_PX = float(os.getenv("CASCADE_MATCH_RADIUS_PX", "15"))
CASCADE_CHANGE_RADIUS = float(os.getenv("CASCADE_CHANGE_RADIUS", "10"))
CASCADE_CLUSTER_DIST = float(os.getenv("CASCADE_CLUSTER_DIST", "300"))

# Cost-model parameters assumed when nothing has been measured.
CASCADE_ASSUMED_R = float(os.getenv("CASCADE_ASSUMED_R", "0.4"))
CASCADE_ASSUMED_A = float(os.getenv("CASCADE_ASSUMED_A", "5"))

# Timeout for one external backend batch, in seconds.
CASCADE_EXTERNAL_TIMEOUT = int(os.getenv("CASCADE_EXTERNAL_TIMEOUT", "3600"))
