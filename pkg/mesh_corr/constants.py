'''
Map of allowed file extensions -> mesh format key.
Lower case entries.
'''
EXTENSION_TO_APP_FORMAT = {
    'obj' : 'obj',
    'ply' : 'ply',
}

'''
Formats accepted by the parser and writer.
PLY is read in either encoding; the header says which.
'''
MESH_FORMATS = {'obj', 'ply-ascii', 'ply-binary-little-endian'}

# Map PLY header format line -> app format
PLY_HEADER_TO_APP = {
    'ascii' : 'ply-ascii',
    'binary_little_endian' : 'ply-binary-little-endian',
}
PLY_APP_TO_HEADER = {v: k for k, v in PLY_HEADER_TO_APP.items()}

# PLY scalar types -> numpy little-endian dtypes
PLY_TYPES = {
    'char': 'i1', 'int8': 'i1',
    'uchar': 'u1', 'uint8': 'u1',
    'short': '<i2', 'int16': '<i2',
    'ushort': '<u2', 'uint16': '<u2',
    'int': '<i4', 'int32': '<i4',
    'uint': '<u4', 'uint32': '<u4',
    'float': '<f4', 'float32': '<f4',
    'double': '<f8', 'float64': '<f8',
}


## Network
# Edge patch: self, 4 one-ring edges, 8 two-ring edges
PATCH_SIZE = 13
RING1_SIZE = 4
RING2_SIZE = 8
# midpoint xyz + mean normal xyz
INPUT_WIDTH = 6
# Pool support entries below this weight are dropped
MAXPOOL_THRESHOLD = 0.1
LOSS_EPSILON = 1e-8

SIGNAL_GEODESIC = 'geodesic_from_center'
SIGNAL_VERTICAL = 'vertical_height'
SIGNAL_RANDOM = 'random'


## Preprocessing
DEFAULT_M0 = 12288
DESK_M0 = 1536
DEFAULT_DIM = 4
QUADRIC_CONDITION_LIMIT = 1e8


## Body model
BETA_MIN = 0.25
BETA_MAX = 4.0
# Blend region at each end of a bone, as a fraction of its length
BLEND_FRACTION = 0.25


## Registration
LAMBDA_OMEGA = 20.0
LAMBDA_OMEGA_DECAY = 0.6
LAMBDA_BETA = 1e-3
LAMBDA_THETA = 1e-4
OUTER_ITERATIONS = 12
INNER_ITERATIONS = 50
ZERO_LAMBDA_ITERATIONS = 2
GRADIENT_TOLERANCE = 1e-7
CONVERGENCE_TOLERANCE = 1e-8
# Data term in squared millimetres, the unit the prior weights are set for
DATA_SCALE = 1e6
# Extra zero-weight rounds allowed after the schedule, until converged
POLISH_ROUNDS = 20
DIVERGENCE_COUNT = 3
NONRIGID_MU = 10.0
NONRIGID_STEPS = 30
COREGISTER_ROUNDS = 5


## Synthetic scans
EXTREMITIES = ('head', 'l_hand', 'r_hand', 'l_foot', 'r_foot')
AMPUTATION_RADIUS = (0.05, 0.2)
MAX_RETRIES = 10
# extremity -> joint whose bone tip seeds the amputation
EXTREMITY_JOINTS = {
    'head' : 'neck',
    'l_hand' : 'l_wrist',
    'r_hand' : 'r_wrist',
    'l_foot' : 'l_ankle',
    'r_foot' : 'r_ankle',
}


## Evaluation
# Cumulative error curve thresholds, cm
CURVE_MAX_CM = 20.0
CURVE_STEP_CM = 0.5
