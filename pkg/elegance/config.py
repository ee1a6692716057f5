import logging
from pathlib import Path

# Logging Configuration
LOG_LEVEL = logging.INFO
LOG_FORMAT = "[%(asctime)s] %(filename)s:%(lineno)d %(message)s"

# Audio
SUPPORTED_SAMPLE_RATES = (8000, 10000, 16000)
DEFAULT_SAMPLE_RATE = 8000

# Metrics (dB)
METRIC_CAP_DB = 300.0
PERFECT_THRESHOLD_DB = 200.0
SI_SDR_EPS = 1e-8

# Toy efficacy acceptance (mean SI-SDR-i, dB)
EFFICACY_BASELINE_MIN_DB = 6.0
EFFICACY_TOLERANCE_DB = 0.2
EFFICACY_IMPAIRED_GAIN_DB = 0.3

# STOI
STOI_SAMPLE_RATE = 10000
STOI_FRAME_LEN = 256
STOI_SEGMENT_FRAMES = 30
STOI_DYN_RANGE_DB = 40.0
STOI_MIN_DURATION_S = STOI_SEGMENT_FRAMES * (STOI_FRAME_LEN // 2) / STOI_SAMPLE_RATE

# Simulation
VISUAL_FPS = 25.0
SNR_RANGE_DB = (-10.0, 10.0)
SWITCH_WINDOW_S = (6.0, 8.0)
SWITCH_MIN_DURATION_S = 16.0
PEAK_LEVEL = 0.9
CROSSFADE_S = 0.010
LOG_FLOOR = 1e-8
CROSS_DOMAIN_SPEAKER_OFFSET = 10000

# Binary containers
VISUAL_MAGIC = b"ELVS"
VISUAL_VERSION = 1
EMBEDDING_MAGIC = b"ELEM"
EMBEDDING_VERSION = 1
CHECKPOINT_FORMAT_VERSION = 1

# Verification
GRADCHECK_EPS = 1e-5
GRADCHECK_TOLERANCE = 1e-4
IMPROVEMENT_THRESHOLD = 1e-6

# Runs
OUT_ROOT_ENV = "ELEGANCE_OUT_ROOT"
DEFAULT_OUT_ROOT = "runs"
EXPERIMENTS_DIR = Path(__file__).resolve().parent.parent / "provisioning" / "experiments"
MAX_WORKERS = 4
