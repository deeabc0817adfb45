import logging
import os
import sys

THREADS_ENV_VAR = "TRIBOOST_THREADS"

# Lower bound on second derivatives before they are used as weights or divisors.
DEFAULT_HESSIAN_FLOOR = 1e-20

# Scores are clamped to this range before exponentiation inside the losses.
SCORE_CLAMP = 700.0

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

_handler = None


def resolve_n_jobs(n_jobs=None):
    """
    Number of workers for joblib. An explicit argument wins, otherwise
    TRIBOOST_THREADS is read; 0 or unset means all cores (joblib's -1).
    """
    if n_jobs is None:
        raw = os.environ.get(THREADS_ENV_VAR, "").strip()
        if not raw:
            return -1
        try:
            n_jobs = int(raw)
        except ValueError:
            logging.getLogger(__name__).warning(
                "Ignoring non-integer %s=%r", THREADS_ENV_VAR, raw
            )
            return -1
    if n_jobs <= 0:
        return -1
    return n_jobs


def configure_logging(verbosity=0):
    """Send log records to stderr; verbosity -1 = WARNING, 0 = INFO, 1+ = DEBUG."""
    if verbosity < 0:
        level = logging.WARNING
    elif verbosity == 0:
        level = logging.INFO
    else:
        level = logging.DEBUG

    global _handler
    root = logging.getLogger()
    if _handler is not None:
        root.removeHandler(_handler)
    _handler = logging.StreamHandler(sys.stderr)
    _handler.setFormatter(logging.Formatter(LOG_FORMAT))
    root.addHandler(_handler)
    root.setLevel(level)
