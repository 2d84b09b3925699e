def register(registry_name='filters'):
    """
    Register the decorated class with one of the app registries,
    'filters' for scan filters or 'signals' for signal functions:

    @register()
    class HeavyWeld(filters_scan.Weld):
        distance = 0.01

    @register('signals')
    class ArmSpan(SignalFunction):
        kind = 'arm_span'
        ...
    """
    from mesh_corr import registry

    target = getattr(registry, registry_name)

    def _class_wrapper(klass):
        if not issubclass(klass, target.base):
            raise ValueError('Wrapped class must subclass {}.'.format(target.base.__name__))

        target.register(klass)

        return klass

    return _class_wrapper
