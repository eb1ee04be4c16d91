import logging
from pathlib import Path
from datetime import datetime
import sys
import os

PACKAGE_LOGGER_NAME = "collective_planner"
SESSION_LOG_BASENAME = "simulation.log"
LOG_FORMAT = "[%(asctime)s] [%(levelname)-8s] [%(module)s:%(funcName)s:%(lineno)d] %(message)s"

class LogManager:
    """
    Owns the handlers of the package logger for one CLI session.
    The previous session's log is archived before the new one is opened.
    """
    def __init__(self, log_dir: Path, debug_mode: bool,
                 max_files_to_keep_in_archive: int, max_log_age_days: int):
        self.log_dir = Path(log_dir)
        self.archive_dir = self.log_dir / "archive"
        self.debug_mode = debug_mode
        self.max_files_to_keep_in_archive = max_files_to_keep_in_archive
        self.max_log_age_days = max_log_age_days

        self.log_dir.mkdir(parents=True, exist_ok=True)
        self.archive_dir.mkdir(exist_ok=True)

        # Rotation messages go to the module logger; the session logger is not configured yet.
        self._perform_log_rotation_and_cleanup()
        self.session_logger = self._setup_session_logger()

    def _setup_session_logger(self) -> logging.Logger:
        logger = logging.getLogger(PACKAGE_LOGGER_NAME)
        level = logging.DEBUG if self.debug_mode else logging.INFO
        logger.setLevel(level)

        if logger.hasHandlers():
            for handler in logger.handlers[:]:
                handler.close()
                logger.removeHandler(handler)

        console_handler = logging.StreamHandler(sys.stdout)
        console_handler.setFormatter(logging.Formatter(LOG_FORMAT, datefmt="%H:%M:%S"))
        console_handler.setLevel(level)
        logger.addHandler(console_handler)

        file_handler = logging.FileHandler(self.log_dir / SESSION_LOG_BASENAME, mode='w', encoding='utf-8')
        file_handler.setFormatter(logging.Formatter(LOG_FORMAT))
        logger.addHandler(file_handler)

        logger.info("=" * 50)
        logger.info("Simulation logger initialized for new session.")
        return logger

    def get_session_logger(self) -> logging.Logger:
        return self.session_logger

    def close(self):
        """Flushes and detaches the handlers installed by this manager."""
        for handler in self.session_logger.handlers[:]:
            handler.flush()
            handler.close()
            self.session_logger.removeHandler(handler)

    def _rotate_log_file(self, basename: str, logger_to_use: logging.Logger):
        log_file = self.log_dir / basename
        if not log_file.exists():
            return
        if log_file.stat().st_size == 0:
            try:
                os.unlink(log_file)
                logger_to_use.info(f"Deleted empty previous log file: {log_file.name}")
            except OSError as e:
                logger_to_use.error(f"Could not delete empty log file {log_file}: {e}", exc_info=True)
            return

        try:
            timestamp = datetime.fromtimestamp(log_file.stat().st_mtime).strftime("%Y-%m-%d_%H-%M-%S")
            base, ext = os.path.splitext(basename)
            destination = self.archive_dir / f"{base}_{timestamp}{ext}"
            counter = 0
            while destination.exists():
                counter += 1
                destination = self.archive_dir / f"{base}_{timestamp}_{counter}{ext}"
            os.rename(log_file, destination)
            logger_to_use.info(f"Archived previous log '{log_file.name}' as '{destination.name}'")
        except OSError as e:
            logger_to_use.error(f"Could not rotate log file {log_file}: {e}", exc_info=True)

    def _cleanup_archived_logs(self, base_name: str, logger_to_use: logging.Logger):
        """Deletes archived logs that are too old or beyond the newest N."""
        try:
            now = datetime.now()
            archived = sorted(
                self.archive_dir.glob(f"{base_name}_*.log"),
                key=lambda p: p.stat().st_mtime,
                reverse=True
            )
            logger_to_use.debug(f"Found {len(archived)} archived '{base_name}' logs.")

            for index, log_file in enumerate(archived):
                age_days = (now - datetime.fromtimestamp(log_file.stat().st_mtime)).days
                too_old = age_days >= self.max_log_age_days
                surplus = index >= self.max_files_to_keep_in_archive
                if not (too_old or surplus):
                    continue
                try:
                    os.unlink(log_file)
                    logger_to_use.info(f"Deleted archived log: {log_file.name} (age {age_days}d, rank {index})")
                except OSError as e:
                    logger_to_use.warning(f"Could not delete archived log {log_file.name}: {e}")
        except OSError as e:
            logger_to_use.error(f"Log cleanup failed for '{base_name}' in {self.archive_dir}: {e}", exc_info=True)

    def _perform_log_rotation_and_cleanup(self):
        internal_logger = logging.getLogger(__name__)
        internal_logger.debug(f"Rotating previous session logs (if any) into: {self.archive_dir}")
        self._rotate_log_file(SESSION_LOG_BASENAME, internal_logger)
        self._cleanup_archived_logs(Path(SESSION_LOG_BASENAME).stem, internal_logger)
