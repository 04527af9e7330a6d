import os
from dotenv import load_dotenv

# Load environment variables from .env file if it exists
load_dotenv()

class Settings:
    # Integration Settings
    DEFAULT_STEP: float = float(os.getenv("DEFAULT_STEP", "0.01"))
    RECORD_EVERY: int = int(os.getenv("RECORD_EVERY", "10"))
    T_END_TIME_CONSTANTS: float = float(os.getenv("T_END_TIME_CONSTANTS", "50"))

    # Synchronization Detection Settings
    SYNC_RESIDUAL_TOL: float = float(os.getenv("SYNC_RESIDUAL_TOL", "1e-7"))
    SYNC_TAIL_FRACTION: float = float(os.getenv("SYNC_TAIL_FRACTION", "0.2"))
    SYNC_MIN_TAIL_SAMPLES: int = int(os.getenv("SYNC_MIN_TAIL_SAMPLES", "10"))
    RATE_FIT_LOW: float = float(os.getenv("RATE_FIT_LOW", "0.2"))
    RATE_FIT_HIGH: float = float(os.getenv("RATE_FIT_HIGH", "0.8"))
    RATE_FIT_FLOOR: float = float(os.getenv("RATE_FIT_FLOOR", "1e-9"))

    # Linear Algebra Settings
    EIGEN_RTOL: float = float(os.getenv("EIGEN_RTOL", "1e-9"))
    SYMMETRY_TOL: float = float(os.getenv("SYMMETRY_TOL", "1e-10"))
    SINC_SERIES_CUTOFF: float = float(os.getenv("SINC_SERIES_CUTOFF", "1e-4"))

    # Fixed Point Solver Settings
    PICARD_TOL: float = float(os.getenv("PICARD_TOL", "1e-10"))
    PICARD_MAX_ITER: int = int(os.getenv("PICARD_MAX_ITER", "500"))
    PICARD_CLAMP_MARGIN: float = float(os.getenv("PICARD_CLAMP_MARGIN", "1e-6"))
    INFNORM_SAMPLES: int = int(os.getenv("INFNORM_SAMPLES", "1000"))

    # Threshold Search Settings
    THRESHOLD_GRID_POINTS: int = int(os.getenv("THRESHOLD_GRID_POINTS", "9"))
    THRESHOLD_TOL_K: float = float(os.getenv("THRESHOLD_TOL_K", "1e-3"))
    ORACLE_T_END_MAX: float = float(os.getenv("ORACLE_T_END_MAX", "200"))

    # Execution Settings
    CONCURRENCY_LIMIT: int = int(os.getenv("CONCURRENCY_LIMIT", "4"))
    OUTPUT_DIR: str = os.getenv("OUTPUT_DIR", "runs")
    CSV_FLOAT_FORMAT: str = os.getenv("CSV_FLOAT_FORMAT", "%.17g")
    LOG_LEVEL: str = os.getenv("LOG_LEVEL", "INFO")

    @property
    def LOG_FORMAT(self) -> str:
        return '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

settings = Settings()
