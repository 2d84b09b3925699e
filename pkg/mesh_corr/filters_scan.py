from mesh_corr import scan_ops
from mesh_corr.constants import EXTREMITY_JOINTS
from mesh_corr.decorators import register
from mesh_corr.filters import (
    AmputateMixin,
    EnableMixin,
    Filter,
    OccludeMixin,
    WeldMixin,
)



@register()
class Weld(WeldMixin, EnableMixin, Filter):
    '''
    Fuse the surface where distinct body parts touch.
    Notes the number of bridges made.
    '''
    def process(self, state, context):
        if (not self.enabled):
            return state
        state, bridges = scan_ops.weld(state, self.distance, self.rest_separation)
        context.notes[self.name()] = bridges
        return state


@register()
class Occlude(OccludeMixin, EnableMixin, Filter):
    '''
    Remove what no scanner viewpoint sees.
    '''
    def process(self, state, context):
        if (not self.enabled):
            return state
        return scan_ops.occlude(state, self.viewpoints, self.elevation, self.image_size)


@register()
class Amputate(AmputateMixin, EnableMixin, Filter):
    '''
    Cut away extremities at random.
    Notes the names removed, '+' separated.
    '''
    def process(self, state, context):
        if (not self.enabled):
            return state
        tree = context.body.tree
        removed = []
        for name in self.extremities:
            # draw both numbers every time so later draws do not shift
            hit = context.rng.random() < self.probability
            radius = context.rng.uniform(*self.radius)
            if (hit):
                tip = tree.tips[tree.joint(EXTREMITY_JOINTS[name])]
                state = scan_ops.amputate(state, tip, radius)
                removed.append(name)
        context.notes[self.name()] = "+".join(removed)
        return state
