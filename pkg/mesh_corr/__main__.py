'''
Standalone entry point, the mesh-corr script.
Configures minimal settings, then runs the app's management commands
the way django-admin would inside a host project.
'''
import sys

import django
from django.conf import settings
from django.core.management import execute_from_command_line


LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'plain': {
            'format': '%(levelname)s %(name)s %(message)s',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'stream': 'ext://sys.stderr',
            'formatter': 'plain',
        },
    },
    'loggers': {
        'mesh_corr': {
            'handlers': ['console'],
            'level': 'INFO',
            'propagate': False,
        },
    },
}


def configure():
    if (not settings.configured):
        settings.configure(
            INSTALLED_APPS=['mesh_corr'],
            LOGGING=LOGGING,
            USE_TZ=True,
        )
        django.setup()

def main(argv=None):
    configure()
    argv = list(sys.argv if argv is None else argv)
    argv[0] = 'mesh-corr'
    execute_from_command_line(argv)


if __name__ == '__main__':
    main()
