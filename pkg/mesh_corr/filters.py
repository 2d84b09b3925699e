from mesh_corr import checks
from mesh_corr.constants import AMPUTATION_RADIUS, EXTREMITIES




class Filter():
    '''
    A filter transforms a synthetic scan in progress, a ScanState, into
    another.
    Configuration is class attributes. Subclass to change them for
    good, or pass keywords to override them on one instance:

        class HeavyWeld(Weld):
            distance = 0.01

        Weld(distance=0.01)

    The geometry is in scan_ops, so a filter can be rewritten against
    another geometry library without changing calling code.
    '''
    def __init__(self, **kwargs):
        for k, v in kwargs.items():
            if (not hasattr(type(self), k)):
                raise TypeError("Unknown filter option. filter:{} option:{}".format(self.name(), k))
            setattr(self, k, v)

    @classmethod
    def name(cls):
        return cls.__name__

    def check(self, **kwargs):
        return []

    def process(self, state, context):
        '''
        Transform a scan.

        state
            ScanState
        context
            ScanContext: the random generator (the only source of
            randomness), the body model, and notes for the manifest
        return
            ScanState
        '''
        raise NotImplementedError

    def __repr__(self):
        return "{}()".format(self.name())



# Classes here on are mixins. They establish attributes and checks,
# skeletons to hang scan-processing code on.
class EnableMixin():
    '''
    enabled=False makes the filter pass the scan through.
    '''
    enabled = True

    def check(self, **kwargs):
        errors = super().check(**kwargs)
        errors += checks.check_boolean('enabled', self.enabled, 'scan_filter.E001', **kwargs)
        return errors


class WeldMixin():
    '''
    Contact between body parts.
    distance
        metres under which posed surfaces count as touching
    rest_separation
        metres the two points must be apart on the rest template, so
        neighbours across a bent joint are not fused
    '''
    distance = 0.005
    rest_separation = 0.05

    def check(self, **kwargs):
        errors = super().check(**kwargs)
        errors += [
            *checks.check_positive_float('distance', self.distance, 'scan_filter.E011', **kwargs),
            *checks.check_positive_float('rest_separation', self.rest_separation, 'scan_filter.E012', **kwargs),
        ]
        return errors


class OccludeMixin():
    '''
    Limited scanner views.
    viewpoints
        cameras evenly spaced around the scan
    elevation
        camera angle above the horizontal, radians
    image_size
        side of the square visibility image, pixels
    '''
    viewpoints = 8
    elevation = 0.3
    image_size = 512

    def check(self, **kwargs):
        errors = super().check(**kwargs)
        errors += [
            *checks.check_positive('viewpoints', self.viewpoints, 'scan_filter.E021', **kwargs),
            *checks.check_float_range('elevation', self.elevation, -1.5, 1.5, 'scan_filter.E022', **kwargs),
            *checks.check_numeric_range('image_size', self.image_size, 16, 8192, 'scan_filter.E023', **kwargs),
        ]
        return errors


class AmputateMixin():
    '''
    Missing extremities.
    probability
        chance each extremity is removed
    radius
        (min, max) geodesic radius in metres, drawn uniformly
    extremities
        names from constants.EXTREMITIES
    '''
    probability = 0.1
    radius = AMPUTATION_RADIUS
    extremities = EXTREMITIES

    def check(self, **kwargs):
        errors = super().check(**kwargs)
        errors += checks.check_float_range('probability', self.probability, 0.0, 1.0, 'scan_filter.E031', **kwargs)
        r = self.radius
        if (not(isinstance(r, (tuple, list)) and len(r) == 2)):
            errors += checks.check_type('radius', r, tuple, 'scan_filter.E032', **kwargs)
        else:
            low = checks.check_positive_float('radius', r[0], 'scan_filter.E032', **kwargs)
            errors += low
            if (not low):
                errors += checks.check_float_range('radius', r[1], float(r[0]), 10.0, 'scan_filter.E032', **kwargs)
        for e in self.extremities:
            errors += checks.check_choice('extremities', e, EXTREMITIES, 'scan_filter.E033', **kwargs)
        return errors
