import logging
import os
import sys
from logging.handlers import RotatingFileHandler


class LoggerSetup:
    @staticmethod
    def setup_logger(logs_dir: str = "logs", level: int = logging.INFO) -> logging.Logger:
        """Set up console logging plus rotating main and error log files"""
        os.makedirs(logs_dir, exist_ok=True)

        formatter = logging.Formatter(
            '%(asctime)s - %(levelname)s - %(message)s',
            datefmt='%Y-%m-%d %H:%M:%S'
        )

        logger = logging.getLogger()
        logger.setLevel(level)
        logger.handlers = []  # Clear existing handlers

        # Console goes to stderr so CLI output on stdout stays line-oriented
        console_handler = logging.StreamHandler(sys.stderr)
        console_handler.setFormatter(formatter)
        logger.addHandler(console_handler)

        log_files = {
            'main': 'adslite.log',
            'error': 'adslite_error.log',
        }

        for log_type, filename in log_files.items():
            handler = RotatingFileHandler(
                os.path.join(logs_dir, filename),
                maxBytes=10*1024*1024,  # 10 MB
                backupCount=30
            )
            handler.setFormatter(formatter)
            if log_type == 'error':
                handler.setLevel(logging.ERROR)
            logger.addHandler(handler)

        logging.info("Logging setup completed")
        return logger
