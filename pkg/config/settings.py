"""
Django settings for the kNN-mimicking models project.

The project has no web surface: Django provides the settings layer, the
management-command CLI, the test runner and a small ORM-backed run ledger.

For the full list of settings and their values, see
https://docs.djangoproject.com/en/4.2/ref/settings/
"""

from pathlib import Path
from decouple import config
import dj_database_url

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent


SECRET_KEY = config('SECRET_KEY', default='knn-models-local-only-not-a-secret')

DEBUG = config('DEBUG', default=False, cast=bool)

ALLOWED_HOSTS = config('ALLOWED_HOSTS', default='localhost,127.0.0.1', cast=lambda v: [s.strip() for s in v.split(',')])


# Application definition

INSTALLED_APPS = [
    'django.contrib.contenttypes',
    # Custom apps
    'diffcore',
    'knn_targets',
    'seq2seq_knn',
    'memnet_knn',
    'training_eval',
    'oversampler',
    'experiments',
]


# Database
# Only the experiment run ledger lives here.

DATABASES = {
    'default': dj_database_url.config(default=f'sqlite:///{BASE_DIR / "db.sqlite3"}')
}


# Internationalization

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = False

USE_TZ = True


DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'


# Logging

KNN_LOG_LEVEL = config('KNN_LOG_LEVEL', default='INFO')

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '{asctime} {levelname} {name} {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'verbose',
        },
    },
    'root': {
        'handlers': ['console'],
        'level': KNN_LOG_LEVEL,
    },
}


# Model and experiment defaults
# Every key can be overridden with an environment variable KNN_<KEY>.

KNN_DEFAULTS = {
    'k': config('KNN_K', default=5, cast=int),
    'tau': config('KNN_TAU', default=0.85, cast=float),
    'alpha': config('KNN_ALPHA', default=9.5, cast=float),
    'lambda': config('KNN_LAMBDA', default=0.12, cast=float),
    'lr': config('KNN_LR', default=0.01, cast=float),
    'epochs': config('KNN_EPOCHS', default=30, cast=int),
    'batch_size': config('KNN_BATCH_SIZE', default=32, cast=int),
    'dropout': config('KNN_DROPOUT', default=0.2, cast=float),
    'hidden': config('KNN_HIDDEN', default=128, cast=int),
    'embedding': config('KNN_EMBEDDING', default=64, cast=int),
    'memory_size': config('KNN_MEMORY_SIZE', default=64, cast=int),
    'memory_draws': config('KNN_MEMORY_DRAWS', default=1, cast=int),
    'ooc_batch': config('KNN_OOC_BATCH', default=64, cast=int),
    'ooc_rounds': config('KNN_OOC_ROUNDS', default=50, cast=int),
    'seed': config('KNN_SEED', default=0, cast=int),
    'patience': config('KNN_PATIENCE', default=5, cast=int),
    'validation_fraction': config('KNN_VALIDATION_FRACTION', default=0.1, cast=float),
    'smote_k': config('KNN_SMOTE_K', default=5, cast=int),
    'oversample_lambda': config('KNN_OVERSAMPLE_LAMBDA', default=1.3, cast=float),
    'oversample_alpha': config('KNN_OVERSAMPLE_ALPHA', default=3.0, cast=float),
    'workers': config('KNN_WORKERS', default=1, cast=int),
}

# Acceptance checks that take minutes (CCD-scale training, 100k-point timing)
KNN_SLOW_TESTS = config('KNN_SLOW_TESTS', default=False, cast=bool)
KNN_CCD_PATH = config('KNN_CCD_PATH', default='')
