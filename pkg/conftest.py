"""Configure Django so pytest can collect the Django test modules."""
import os

import django

os.environ.setdefault("DJANGO_SETTINGS_MODULE", "selftrap.settings")
django.setup()
