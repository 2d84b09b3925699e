from django.apps import AppConfig
from django.core import checks
from django.utils.translation import gettext_lazy as _

from mesh_corr.checks import check_filters, check_settings, check_signals


class MeshCorrConfig(AppConfig):
    name = 'mesh_corr'
    verbose_name = _("Mesh correspondence")

    def ready(self):
        super().ready()
        # stock classes register on import
        from mesh_corr import filters_scan, surface_field  # noqa: F401
        self.module.autodiscover()
        checks.register(check_settings, 'mesh_corr')
        checks.register(check_filters, 'mesh_corr')
        checks.register(check_signals, 'mesh_corr')
