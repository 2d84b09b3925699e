#!/usr/bin/env python
'''
Run the app's tests with Django's test runner, without a host project.

    python runtests.py [test labels]
'''
import os
import sys

import django
from django.conf import settings


TEST_SETTINGS = {
    'INSTALLED_APPS': ['mesh_corr'],
    'USE_TZ': True,
    'MESH_CORR': {},
    'LOGGING_CONFIG': None,
}


def configure():
    if (not settings.configured):
        settings.configure(**TEST_SETTINGS)
        django.setup()

def main(argv):
    configure()
    from django.test.utils import get_runner

    runner = get_runner(settings)(verbosity=1)
    failures = runner.run_tests(argv or ['mesh_corr.tests'])
    sys.exit(bool(failures))


if __name__ == '__main__':
    sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))
    main(sys.argv[1:])
