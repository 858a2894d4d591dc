CHECKPOINT_MAGIC = b"CDPT"
CHECKPOINT_VERSION = 1
DATASET_MAGIC = b"CDST"
DATASET_VERSION = 1
DATASET_BINARY_NAME = "data.cdst"
DATASET_META_NAME = "meta.json"

CONFIG_VERSION = 1
THREADS_ENV_VAR = "CDISENT_THREADS"

# ndiff numeric guards
LOG_CLAMP_MIN = 1e-12
LOGVAR_CLAMP = 10.0

# scm caps
MAX_SCM_VARIABLES = 8
MAX_SCM_CARDINALITY = 6
MAX_JOINT_ENTRIES = 10**6
TABLE_TOLERANCE = 1e-12

DEFAULT_LEARNING_RATE = 1e-3
DEFAULT_ADAM_BETAS = (0.9, 0.999)
DEFAULT_ADAM_EPS = 1e-8
DEFAULT_BATCH_SIZE = 128

DEFAULT_IMAGE_SIZE = (16, 16)
MAX_IMAGE_SIZE = 64

RIDGE_ALPHA = 1e-2
IOSS_RESOLUTION = 10
IOSS_QUANTILES = (0.01, 0.99)
IOSS_MAX_DIMS = 6
MIC_MAX_BINS = 8
MIC_GRID_EXPONENT = 0.6
DEAD_LATENT_STD = 1e-6

# differentiable IOSS surrogate
IOSS_MIN_BATCH = 32
IOSS_PROBE_GRID = 8
IOSS_PROBE_RANGE = 1.5
IOSS_SOFTMIN_TAU = 0.01
IOSS_DISTANCE_SCALE = 0.5
IOSS_MAX_PAIRS = 15
