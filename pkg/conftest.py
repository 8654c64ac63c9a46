"""Configure Django before pytest collects the Ergodic_Lab tests."""
import os

import django

os.environ.setdefault("DJANGO_SETTINGS_MODULE", "Tamed_Ergo.settings")
django.setup()
