"""
Development settings for the FMSC toolkit
"""
from .base import *

DEBUG = True

ALLOWED_HOSTS = ['*']

LOGGING['loggers']['apps']['level'] = os.getenv('FMSC_LOG_LEVEL', 'DEBUG')
