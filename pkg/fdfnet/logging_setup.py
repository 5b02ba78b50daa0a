"""Root logger setup for the command line. Library modules only call ``logging.getLogger(__name__)``."""
import logging
import os
import sys

LOG_LEVEL_ENV = "FDFNET_LOG_LEVEL"
LOG_FORMAT = "%(asctime)s %(levelname)-7s %(name)s: %(message)s"


def configure_logging(level=None) -> int:
    """Send fdfnet logs to stderr at ``level``, else ``$FDFNET_LOG_LEVEL``, else INFO."""
    name = level or os.environ.get(LOG_LEVEL_ENV, "INFO")
    resolved = logging.getLevelName(str(name).upper())
    if not isinstance(resolved, int):
        resolved = logging.INFO
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter(LOG_FORMAT, datefmt="%H:%M:%S"))
    root = logging.getLogger("fdfnet")
    root.handlers[:] = [handler]
    root.setLevel(resolved)
    root.propagate = False
    # numba's compiler logs are noisy at DEBUG
    logging.getLogger("numba").setLevel(max(resolved, logging.WARNING))
    return resolved
