from collections.abc import Iterable

from django.utils.module_loading import import_string

from mesh_corr import utils


class AlreadyRegistered(KeyError):
    pass


class NotRegistered(KeyError):
    pass


class Unregisterable(Exception):
    pass



class ClassRegistry:
    '''
    Classes by name.
    Lets config files and command options refer to code with a string,
    'vertical_height' or 'Weld'. Entries are grouped by the app that
    declares them, so a host app can add its own beside the stock
    ones. Names must be unique across apps.

    base_path
        dotted path of the class every entry must subclass. Resolved on
        first use, so registries can be declared before the classes.
    '''
    def __init__(self, base_path):
        self.base_path = base_path
        # app_name -> list(class (not instance))
        self._registry = {}

    @property
    def base(self):
        return import_string(self.base_path)

    def _find(self, name):
        for class_list in self._registry.values():
            for k in class_list:
                if (k.name() == name):
                    return k
        return None

    def __contains__(self, klass_or_name):
        name = klass_or_name if isinstance(klass_or_name, str) else klass_or_name.name()
        return self._find(name) is not None

    def register(self, class_or_iterable):
        if (not isinstance(class_or_iterable, Iterable)):
            class_or_iterable = [class_or_iterable]
        base = self.base
        for klass in class_or_iterable:
            if (not(isinstance(klass, type) and issubclass(klass, base))):
                raise Unregisterable("Class is not a subclass of {}. class:{}".format(
                    base.__name__,
                    klass,
                ))
            if (klass.name() in self):
                raise AlreadyRegistered('Already registered. name:{}'.format(
                    klass.name()
                ))
            self._registry.setdefault(utils.app_name(klass), []).append(klass)

    def unregister(self, klass):
        app_name = utils.app_name(klass)
        class_list = self._registry.get(app_name, [])
        if (not(klass in class_list)):
            raise NotRegistered('Class can not be unregistered. class:{}'.format(klass.__name__))
        class_list.remove(klass)
        if (not class_list):
            del self._registry[app_name]

    def get(self, name):
        r = self._find(name)
        if (r is None):
            raise NotRegistered("Entry requested but not found. name:{} registered:{}".format(
                name,
                ", ".join(self.registered_names())
            ))
        return r

    def registered_names(self):
        return [k.name() for k in self.list_entries()]

    def list_entries(self):
        r = []
        for l in self._registry.values():
            r.extend(l)
        return r

    def __str__(self):
        r = []
        for app_name, class_list in self._registry.items():
            class_names = ", ".join(klass.name() for klass in class_list)
            r.append(f"{app_name}=>({class_names})")
        class_list_by_app = ", ".join(r)
        return f"{self.__class__.__name__}({class_list_by_app})"



signals = ClassRegistry('mesh_corr.surface_field.SignalFunction')
filters = ClassRegistry('mesh_corr.filters.Filter')
