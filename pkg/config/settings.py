"""
Django settings for the ASAP platoon-defense project.

The project uses Django as its process shell only: settings, management
commands, logging and the test runner. There is no database and no HTTP
surface.

Every ASAP_* value below can be overridden from the environment (or a .env
file); none of them is required.
"""

from pathlib import Path
import os
from dotenv import load_dotenv

load_dotenv()

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent


SECRET_KEY = os.getenv('DJANGO_SECRET_KEY', 'asap-local-only-not-a-secret')

DEBUG = os.getenv('DJANGO_DEBUG', 'False') == 'True'

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    'rest_framework',
    'apps.platoon',
    'apps.placement',
    'apps.saturation',
    'apps.validation',
    'apps.runs',
]

MIDDLEWARE = []

# No persistence: the dummy backend is enough for management commands and
# SimpleTestCase-based tests.
DATABASES = {}


# Internationalization

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = False

USE_TZ = True


def _env_float(name, default):
    value = os.getenv(name)
    return float(value) if value not in (None, '') else default


def _env_int(name, default):
    value = os.getenv(name)
    return int(value) if value not in (None, '') else default


def _env_grid(name, default):
    value = os.getenv(name)
    if not value:
        return default
    return [float(item) for item in value.split(',') if item.strip()]


# Actuator placement
ASAP_EPSILON = _env_float('ASAP_EPSILON', 1e-8)
ASAP_LYAPUNOV_TOLERANCE = _env_float('ASAP_LYAPUNOV_TOLERANCE', 1e-8)
ASAP_TIE_TOLERANCE = _env_float('ASAP_TIE_TOLERANCE', 1e-10)
ASAP_MAX_SUBSETS = _env_int('ASAP_MAX_SUBSETS', 100_000)

# Actuator saturation
ASAP_A_GRID = _env_grid('ASAP_A_GRID', [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9])
ASAP_SDP_SOLVER = os.getenv('ASAP_SDP_SOLVER', 'CLARABEL')
ASAP_SDP_FALLBACK_SOLVER = os.getenv('ASAP_SDP_FALLBACK_SOLVER', 'SCS')
ASAP_SDP_TOLERANCE = _env_float('ASAP_SDP_TOLERANCE', 1e-7)
ASAP_SAFETY_MARGIN = _env_float('ASAP_SAFETY_MARGIN', 1e-6)
ASAP_PD_MARGIN = _env_float('ASAP_PD_MARGIN', 1e-9)
# Accepted SDP solutions must pass these checks on Y, the LMI and the planes.
ASAP_LMI_TOLERANCE = _env_float('ASAP_LMI_TOLERANCE', 1e-6)
ASAP_CERTIFICATE_SLACK = _env_float('ASAP_CERTIFICATE_SLACK', 1e-7)
# Absolute amplitude gap before a run warns that its bounds differ from the config's reference.
ASAP_REFERENCE_BOUND_TOLERANCE = _env_float('ASAP_REFERENCE_BOUND_TOLERANCE', 0.02)

# Geometry
ASAP_TANGENCY_SLACK = _env_float('ASAP_TANGENCY_SLACK', 1e-6)
ASAP_BOUNDARY_POINTS = _env_int('ASAP_BOUNDARY_POINTS', 200)

# Monte Carlo validation
ASAP_MC_HORIZON = _env_int('ASAP_MC_HORIZON', 200)
ASAP_MC_TRAJECTORIES = _env_int('ASAP_MC_TRAJECTORIES', 10_000)
ASAP_MC_SEED = _env_int('ASAP_MC_SEED', 42)
ASAP_MC_STRATEGY = os.getenv('ASAP_MC_STRATEGY', 'mixed')
ASAP_MC_CHUNK = _env_int('ASAP_MC_CHUNK', 500)
ASAP_MC_RESERVOIR = _env_int('ASAP_MC_RESERVOIR', 10_000)

# Grid points, greedy candidates and trajectory chunks may run in a thread pool.
ASAP_MAX_WORKERS = _env_int('ASAP_MAX_WORKERS', 1)

ASAP_CONFIG_VERSION = 1


LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'standard': {
            'format': '%(asctime)s %(levelname)s %(name)s %(message)s',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'standard',
        },
    },
    'loggers': {
        'asap': {
            'handlers': ['console'],
            'level': os.getenv('ASAP_LOG_LEVEL', 'INFO'),
            'propagate': False,
        },
    },
}
