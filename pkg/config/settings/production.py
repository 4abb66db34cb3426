"""
Production (batch cluster) settings for the FMSC toolkit
"""
from .base import *
import os

DEBUG = False

ALLOWED_HOSTS = os.getenv("ALLOWED_HOSTS", "localhost").split(",")

# Long simulation grids log per-cell progress only.
LOGGING['loggers']['apps']['level'] = os.getenv('FMSC_LOG_LEVEL', 'WARNING')
