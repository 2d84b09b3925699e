from pathlib import Path

from django.core import checks



## This app specific
def check_filters(**kwargs):
    '''
    Check registered scan filters with Django static checks framework.
    '''
    from mesh_corr import registry
    errors = []
    for filter_class in registry.filters.list_entries():
        errors.extend(filter_class().check(**kwargs))
    return errors

def check_signals(**kwargs):
    from mesh_corr import registry
    errors = []
    for signal_class in registry.signals.list_entries():
        errors.extend(signal_class.check(**kwargs))
    return errors

def check_settings(**kwargs):
    '''
    Check the merged MESH_CORR settings.
    '''
    from django.core.exceptions import ImproperlyConfigured
    from mesh_corr import conf
    try:
        return conf.check_config(conf.merged_settings())
    except ImproperlyConfigured as e:
        return [checks.Error(str(e), id='mesh_corr.E001')]

def check_signal_kind(setting_name, v, eid, **kwargs):
    errors = []
    if (not(isinstance(v, str) and v)):
        errors.append(
            checks.Error(
                "'{}' value '{}' must be a non-empty name.".format(
                setting_name,
                v,
                ),
                id=eid,
        ))
    return errors

def check_signal_registered(setting_name, v, eid, **kwargs):
    from mesh_corr import registry
    errors = []
    if (not(v in registry.signals)):
        errors.append(
            checks.Error(
                "'{}' value '{}' is not in the signal registry. registered: {}".format(
                setting_name,
                v,
                ", ".join(registry.signals.registered_names()),
                ),
                id=eid,
        ))
    return errors



## General
def check_type(setting_name, v, tpe, eid, **kwargs):
    errors = []
    if (not(type(v)==tpe)):
        errors.append(
            checks.Error(
                "'{}' value '{}' must be type {}.".format(
                setting_name,
                v,
                tpe.__name__
            ),
            id=eid,
        ))
    return errors

def check_boolean(setting_name, v, eid, **kwargs):
    return check_type(setting_name, v, bool, eid, **kwargs)

def check_int(setting_name, v, eid, **kwargs):
    return check_type(setting_name, v, int, eid, **kwargs)

def check_positive(setting_name, v, eid, **kwargs):
    errors = check_int(setting_name, v,  eid, **kwargs)
    if ((not errors) and int(v) <= 0):
        errors.append(
            checks.Error(
            "'{}' value '{}' must be a positive number.".format(
            setting_name,
            v
            ),
            id=eid,
        ))
    return errors

def check_positive_float(setting_name, v, eid, **kwargs):
    errors = []
    try:
        if (isinstance(v, bool) or float(v) <= 0):
            raise TypeError
    except (TypeError, ValueError):
        errors.append(
            checks.Error(
            "'{}' value '{}' must be a positive float.".format(
            setting_name,
            v
            ),
            id=eid,
        ))
    return errors

def check_numeric_range(setting_name, v, imin, imax, eid, **kwargs):
    errors = []
    try:
        if (type(v) != int or v < imin or v > imax):
            raise TypeError
    except TypeError:
        errors.append(
            checks.Error(
                "'{}' value '{}' must be an integer in {}--{}.".format(
                setting_name,
                v,
                imin,
                imax,
                ),
                id=eid,
        ))
    return errors

def check_float_range(setting_name, v, fmin, fmax, eid, **kwargs):
    errors = []
    try:
        if (isinstance(v, bool) or float(v) < fmin or float(v) > fmax):
            raise TypeError
    except (TypeError, ValueError):
        errors.append(
            checks.Error(
                "'{}' value '{}' must be a number in {}--{}.".format(
                setting_name,
                v,
                fmin,
                fmax,
                ),
                id=eid,
        ))
    return errors

def check_choice(setting_name, v, choices, eid, **kwargs):
    errors = []
    if (not(v in choices)):
        errors.append(
            checks.Error(
                "'{}' value '{}' unrecognised. choices: {}".format(
                setting_name,
                v,
                ", ".join(str(c) for c in choices),
                ),
                id=eid,
        ))
    return errors

def check_file_exists(setting_name, v, eid, **kwargs):
    errors = []
    if (v and (not(Path(v).is_file()))):
        errors.append(
            checks.Error(
            "'{}' value '{}' can not be detected as an existing file.".format(
            setting_name,
            v
            ),
            id=eid,
        ))
    return errors
