#!/usr/bin/env python
"""
Command-line entry point.

    python manage.py asap --config case_studies/three_vehicle_m2.json --out out/
    python manage.py test --exclude-tag slow
"""
import os
import sys


def main():
    os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'config.settings')
    try:
        from django.core.management import execute_from_command_line
    except ImportError as exc:
        raise ImportError(
            "Couldn't import Django. Install the packages in requirements.txt "
            "into the active environment."
        ) from exc
    execute_from_command_line(sys.argv)


if __name__ == '__main__':
    main()
