"""Dense correspondence from human scans to a template. Mesh convolutions regress into a geodesic embedding, then a skinned body is fitted by guided ICP."""
__version__ = '0.1.0'

from django.utils.module_loading import autodiscover_modules

from mesh_corr.decorators import register
from mesh_corr.filters import Filter


# Run from MeshCorrConfig in apps.py. The import is not safe while
# Django is still initialising.
def autodiscover():
    autodiscover_modules('scan_filters', 'scan_signals')
