"""
Django settings for the FMSC toolkit.
Base settings shared across all environments.
"""
import os
from pathlib import Path
from dotenv import load_dotenv


load_dotenv()


# Build paths inside the project
BASE_DIR = Path(__file__).resolve().parent.parent.parent

# Only used for Django's internals; nothing here is served over HTTP.
SECRET_KEY = os.getenv('SECRET_KEY', 'fmsc-batch-toolkit-not-a-secret')

# Application definition
INSTALLED_APPS = [
    'django.contrib.auth',
    'django.contrib.contenttypes',

    # Third party apps
    'rest_framework',

    # Local apps
    'apps.common',
    'apps.moments',
    'apps.selection',
    'apps.inference',
    'apps.simulation',
    'apps.analysis',
]

# Database
# The toolkit keeps no state; sqlite only satisfies Django's bootstrap.
DATABASES = {
    'default': {
        'ENGINE': 'django.db.backends.sqlite3',
        'NAME': BASE_DIR / 'db.sqlite3',
    }
}

# Internationalization
LANGUAGE_CODE = 'en-us'
TIME_ZONE = 'UTC'
USE_I18N = False
USE_TZ = True

# Default primary key field type
DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'

# REST Framework Configuration (serializers only, no views)
REST_FRAMEWORK = {
    'COERCE_DECIMAL_TO_STRING': False,
    'UNAUTHENTICATED_USER': None,
}

# FMSC defaults. Every entry can be overridden from the environment / .env
FMSC = {
    'SEED': int(os.getenv('FMSC_SEED', '20140101')),
    'SIM_DRAWS': int(os.getenv('FMSC_SIM_DRAWS', '1000')),
    'ANALYSIS_DRAWS': int(os.getenv('FMSC_ANALYSIS_DRAWS', '10000')),
    'DESK_REPS': int(os.getenv('FMSC_DESK_REPS', '2000')),
    'THREADS': int(os.getenv('FMSC_THREADS', str(os.cpu_count() or 1))),
    'SEARCH_BUDGET': int(os.getenv('FMSC_SEARCH_BUDGET', '2000')),
    'TAU_GRID_POINTS': int(os.getenv('FMSC_TAU_GRID_POINTS', '100')),
    'OUTPUT_DIR': os.getenv('FMSC_OUTPUT_DIR', str(BASE_DIR / 'output')),
}

FMSC_LOG_LEVEL = os.getenv('FMSC_LOG_LEVEL', 'INFO')

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '{asctime} {levelname} {name}: {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'verbose',
        },
    },
    'loggers': {
        'apps': {
            'handlers': ['console'],
            'level': FMSC_LOG_LEVEL,
            'propagate': False,
        },
    },
}
