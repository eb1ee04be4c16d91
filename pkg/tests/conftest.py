import logging
import os

import pytest

SLOW_ENV_VAR = "COLLECTIVE_PLANNER_SLOW"

def pytest_configure(config):
    """
    Called after command line options have been parsed and before test collection.
    Registers the marker for the long-running acceptance checks.
    """
    config.addinivalue_line("markers", f"slow: long-running acceptance check, enabled by {SLOW_ENV_VAR}=1")

def pytest_collection_modifyitems(config, items):
    if os.environ.get(SLOW_ENV_VAR) == "1":
        return
    skip_slow = pytest.mark.skip(reason=f"set {SLOW_ENV_VAR}=1 to run")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)

def pytest_unconfigure(config):
    """
    Called before test process is exited. Detaches package log handlers a test may have left behind.
    """
    logger = logging.getLogger("collective_planner")
    for handler in logger.handlers[:]:
        handler.close()
        logger.removeHandler(handler)
