import os
import sys
import logging
import traceback
from typing import Any, Optional

from google.cloud import logging as cloud_logging


# Define the logging name, read from environment variable LOGGING_NAME, with a default fallback.
logging_name: str = os.getenv('LOGGING_NAME', 'admm-net-radar')

# Route records to Google Cloud Logging only when explicitly requested.
CLOUD_LOGGING: bool = os.getenv('CLOUD_LOGGING', 'False') == 'True'
DEBUG: bool = os.getenv('DEBUG', 'False') == 'True'

# The cloud client needs credentials, so it is created on first use and shared afterwards.
_logging_client: Optional[Any] = None


def _cloud_logger() -> Any:
    global _logging_client
    if _logging_client is None:
        _logging_client = cloud_logging.Client()
    return _logging_client.logger(logging_name)


def _stream_logger() -> logging.Logger:
    logger = logging.getLogger(logging_name)
    if not logger.handlers:
        handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(logging.Formatter("%(asctime)s %(message)s"))
        logger.addHandler(handler)
        logger.propagate = False
    logger.setLevel(logging.DEBUG if DEBUG else logging.INFO)
    return logger


class AppLogger():
    """
    AppLogger Class

    This class provides a centralized logging mechanism for the application.
    It supports logging messages at DEBUG, INFO, WARNING and ERROR levels.

    Records go to Google Cloud Logging when the environment variable
    `CLOUD_LOGGING` is "True", and to a standard-library stream logger on
    stderr otherwise.

    Attributes:
        logger: The logger instance (a Cloud Logging logger or a `logging.Logger`).
        cloud (bool): Whether the Cloud Logging backend is in use.
        debug (bool): Whether DEBUG records are emitted.
    """

    def __init__(self):
        """
        Initializes the AppLogger with the backend selected by the environment.
        """
        self.cloud = CLOUD_LOGGING
        self.debug = DEBUG
        self.logger = _cloud_logger() if self.cloud else _stream_logger()

    def _emit(self, severity: str, message: str) -> None:
        if self.cloud:
            self.logger.log_text(message, severity=severity)
        else:
            self.logger.log(getattr(logging, severity), message)

    @staticmethod
    def _active_traceback() -> str:
        # Only attach a traceback when an exception is actually being handled.
        if sys.exc_info()[0] is None:
            return ""
        return f":\n{traceback.format_exc()}"

    def log_debug(self, message: str) -> None:
        """
        Log a DEBUG level message. Dropped on every backend unless `DEBUG` is "True".

        Args:
            message (str): The diagnostic message to log.
        """
        if not self.debug:
            return
        self._emit('DEBUG', f"[DEBUG] {message}")

    def log_info(self, message: str) -> None:
        """
        Log an INFO level message.

        Args:
            message (str): The informational message to log.

        """
        self._emit('INFO', f"[INFO] {message}")

    def log_error(self, message: str) -> None:
        """
        Log an ERROR level message, with the active traceback if any.

        Args:
            message (str): The error message to log.

        """
        self._emit('ERROR', f"[ERROR] {message}{self._active_traceback()}")

    def log_warning(self, message: str) -> None:
        """
        Log a WARNING level message, with the active traceback if any.

        Args:
            message (str): The warning message to log.

        Returns:
            None
        """
        self._emit('WARNING', f"[WARNING] {message}{self._active_traceback()}")
