"""
Configuration Settings Module
Central configuration management for the decentralized learning simulator.

Runtime knobs (output directory, logging, worker count, numerical tolerances)
come from environment variables, optionally loaded from a .env file.
Experiment parameters live in TOML files, see src/config/experiment.py.
"""

import logging
import os
from pathlib import Path

from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()

# Base directories
BASE_DIR = Path(__file__).parent.parent.parent
CONFIG_DIR = Path(__file__).parent
LOGS_DIR = Path(os.getenv('RKHS_SIM_LOGS_DIR', BASE_DIR / 'logs'))

LOGS_DIR.mkdir(parents=True, exist_ok=True)


class Config:
    """Main configuration class."""

    # Application Settings
    APP_NAME = os.getenv('APP_NAME', 'Decentralized RKHS Learning Simulator')
    DEBUG_MODE = os.getenv('DEBUG_MODE', 'False').lower() == 'true'

    # Output Settings
    OUTPUT_DIR = Path(os.getenv('RKHS_SIM_OUTPUT_DIR', BASE_DIR / 'results'))
    DEFAULT_EXPERIMENT_FILE = CONFIG_DIR / 'baseline.toml'
    CSV_FLOAT_FORMAT = os.getenv('CSV_FLOAT_FORMAT', '%.12g')

    # Execution Settings
    MAX_WORKERS = int(os.getenv('MAX_WORKERS', '1'))
    DEFAULT_MASTER_SEED = int(os.getenv('DEFAULT_MASTER_SEED', '42'))

    # Numerical Settings
    PROBE_MAX_DIM = int(os.getenv('PROBE_MAX_DIM', '64'))
    DICTIONARY_CONDITION_LIMIT = float(os.getenv('DICTIONARY_CONDITION_LIMIT', '1e12'))
    EIGEN_TOLERANCE = float(os.getenv('EIGEN_TOLERANCE', '1e-10'))
    COMPACTION_INTERVAL = int(os.getenv('COMPACTION_INTERVAL', '1000'))

    # Logging Configuration
    LOG_LEVEL = os.getenv('LOG_LEVEL', 'INFO')
    LOG_FILE = LOGS_DIR / 'simulator.log'
    LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

    @classmethod
    def validate(cls) -> bool:
        """
        Validate that the runtime configuration is usable.

        Returns:
            bool: True if configuration is valid, False otherwise
        """
        problems = []

        if cls.MAX_WORKERS < 1:
            problems.append(f'MAX_WORKERS must be >= 1 (got {cls.MAX_WORKERS})')

        if cls.PROBE_MAX_DIM < 1:
            problems.append(f'PROBE_MAX_DIM must be >= 1 (got {cls.PROBE_MAX_DIM})')

        if cls.DICTIONARY_CONDITION_LIMIT <= 1.0:
            problems.append('DICTIONARY_CONDITION_LIMIT must exceed 1')

        if not cls.DEFAULT_EXPERIMENT_FILE.exists():
            problems.append(f'missing experiment file {cls.DEFAULT_EXPERIMENT_FILE}')

        if problems:
            for problem in problems:
                logger.error("Invalid configuration: %s", problem)
            return False

        logger.debug("Configuration validated successfully")
        return True

    @classmethod
    def print_config(cls):
        """Print current configuration."""
        print("\n" + "=" * 60)
        print("CURRENT CONFIGURATION")
        print("=" * 60)
        print(f"App Name: {cls.APP_NAME}")
        print(f"Debug Mode: {cls.DEBUG_MODE}")
        print(f"Output Directory: {cls.OUTPUT_DIR}")
        print(f"Default Experiment: {cls.DEFAULT_EXPERIMENT_FILE}")
        print(f"Max Workers: {cls.MAX_WORKERS}")
        print(f"Probe Max Dim: {cls.PROBE_MAX_DIM}")
        print(f"Log Level: {cls.LOG_LEVEL}")
        print("=" * 60 + "\n")


class DevelopmentConfig(Config):
    """Development-specific configuration."""
    DEBUG_MODE = True
    LOG_LEVEL = os.getenv('LOG_LEVEL', 'DEBUG')


class ProductionConfig(Config):
    """Production-specific configuration."""
    DEBUG_MODE = False
    LOG_LEVEL = os.getenv('LOG_LEVEL', 'WARNING')
    MAX_WORKERS = int(os.getenv('MAX_WORKERS', str(os.cpu_count() or 1)))


class TestConfig(Config):
    """Testing-specific configuration."""
    DEBUG_MODE = True
    LOG_LEVEL = 'DEBUG'
    MAX_WORKERS = 1


# Determine which config to use based on environment
ENV = os.getenv('ENVIRONMENT', 'development').lower()

if ENV == 'production':
    config = ProductionConfig()
elif ENV == 'testing':
    config = TestConfig()
else:
    config = DevelopmentConfig()


logging.basicConfig(
    level=getattr(logging, config.LOG_LEVEL.upper(), logging.INFO),
    format=config.LOG_FORMAT,
    handlers=[
        logging.FileHandler(config.LOG_FILE),
        logging.StreamHandler()
    ]
)

logger = logging.getLogger(__name__)


def get_config():
    """Get the current configuration object."""
    return config


def get_logger(name: str = __name__):
    """
    Get a logger instance.

    Args:
        name (str): Logger name

    Returns:
        logging.Logger: Logger instance
    """
    return logging.getLogger(name)


__all__ = [
    'Config',
    'DevelopmentConfig',
    'ProductionConfig',
    'TestConfig',
    'config',
    'logger',
    'get_config',
    'get_logger',
    'BASE_DIR',
    'CONFIG_DIR',
    'LOGS_DIR'
]


if __name__ != "__main__":
    config.validate()
else:
    config.print_config()
    config.validate()
