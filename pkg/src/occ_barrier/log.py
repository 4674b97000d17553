"""Logging setup driven by the ``OCC_BARRIER_LOG`` environment variable."""
from __future__ import annotations

import logging
import os
import sys
from typing import Optional

ENV_VAR = "OCC_BARRIER_LOG"
LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"
_ROOT = "occ_barrier"


class StderrHandler(logging.StreamHandler):
    """Stream handler bound to whatever ``sys.stderr`` is when a record is emitted."""

    def __init__(self) -> None:
        super().__init__()
        self.setFormatter(logging.Formatter(LOG_FORMAT))

    @property
    def stream(self):
        return sys.stderr

    @stream.setter
    def stream(self, value) -> None:
        # test runners and notebooks swap sys.stderr; never hold on to one
        pass


def configure_logging(level: Optional[str] = None) -> int:
    """Install one stderr handler on the package logger and return the level used.

    ``level`` wins over the environment; unknown names fall back to WARNING.
    Calling it again only updates the level.
    """
    name = (level or os.environ.get(ENV_VAR) or "WARNING").upper()
    numeric = logging.getLevelName(name)
    if not isinstance(numeric, int):
        numeric = logging.WARNING

    logger = logging.getLogger(_ROOT)
    logger.setLevel(numeric)
    if not any(isinstance(h, StderrHandler) for h in logger.handlers):
        logger.addHandler(StderrHandler())
    return numeric
