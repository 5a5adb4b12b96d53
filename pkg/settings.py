import logging
import os
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

from dotenv import dotenv_values

from errors import ConfigError

ENV_PREFIX = "ADSLITE_"
DEFAULT_ENV_FILE = ".env"


@dataclass(frozen=True)
class ServiceConfig:
    corpus_path: str
    synonyms_path: str
    groups_dir: str
    refereed_path: str
    params_path: str
    profiles_path: str
    libraries_path: str
    listen: str = "127.0.0.1:8086"
    output_dir: str = "digests"
    logs_dir: str = "logs"
    base_url: str = ""
    library_seed: Optional[int] = None
    affiliation_bias_threshold: float = 0.9
    default_digest_days: int = 10

    @property
    def listen_address(self) -> Tuple[str, int]:
        host, _, port = self.listen.rpartition(":")
        return host or "127.0.0.1", int(port)


class ConfigLoader:
    @staticmethod
    def read_values(env_file: Optional[str] = DEFAULT_ENV_FILE) -> Dict[str, str]:
        """Named keys from the dotenv file, overridden by ADSLITE_* environment variables"""
        values = {}
        if env_file and os.path.exists(env_file):
            values.update({k: v for k, v in dotenv_values(env_file).items() if v is not None})
        values.update({k: v for k, v in os.environ.items() if k.startswith(ENV_PREFIX)})
        return values

    @staticmethod
    def load_config(env_file: Optional[str] = DEFAULT_ENV_FILE) -> ServiceConfig:
        """Load configuration from the dotenv file and the environment"""
        values = ConfigLoader.read_values(env_file)

        def get(key: str, default: str = "") -> str:
            return values.get(ENV_PREFIX + key, default).strip()

        try:
            seed = get('LIBRARY_SEED')
            config = ServiceConfig(
                corpus_path=get('CORPUS_PATH', 'data/corpus.jsonl'),
                synonyms_path=get('SYNONYMS_PATH', 'data/synonyms.txt'),
                groups_dir=get('GROUPS_DIR', 'data/groups'),
                refereed_path=get('REFEREED_PATH', 'data/refereed.log'),
                params_path=get('PARAMS_PATH', 'data/classifier.env'),
                profiles_path=get('PROFILES_PATH', 'data/profiles.jsonl'),
                libraries_path=get('LIBRARIES_PATH', 'data/libraries.journal'),
                listen=get('LISTEN', '127.0.0.1:8086'),
                output_dir=get('OUTPUT_DIR', 'digests'),
                logs_dir=get('LOGS_DIR', 'logs'),
                base_url=get('BASE_URL').rstrip('/'),
                library_seed=int(seed) if seed else None,
                affiliation_bias_threshold=float(get('AFFIL_BIAS_THRESHOLD', '0.9')),
                default_digest_days=int(get('DIGEST_DAYS', '10')),
            )
            config.listen_address
        except ValueError as e:
            raise ConfigError(f"invalid configuration value: {e}")
        return config

    @staticmethod
    def missing_paths(config: ServiceConfig) -> List[str]:
        missing = []
        required_files = {
            'corpus': config.corpus_path,
            'synonyms': config.synonyms_path,
            'classifier params': config.params_path,
        }
        for name, path in required_files.items():
            if not os.path.isfile(path):
                missing.append(f"{name}:{path}")
        if not os.path.isdir(config.groups_dir):
            missing.append(f"groups:{config.groups_dir}")
        # created on first write, but their directory must exist
        for name, path in {'refereed registry': config.refereed_path,
                           'profiles': config.profiles_path,
                           'libraries journal': config.libraries_path}.items():
            if not os.path.isdir(os.path.dirname(os.path.abspath(path))):
                missing.append(f"{name}:{path}")
        return missing

    @staticmethod
    def validate_config(config: ServiceConfig) -> ServiceConfig:
        """Fail fast on any missing required path"""
        missing = ConfigLoader.missing_paths(config)
        if missing:
            logging.error(f"Missing required configuration: {', '.join(missing)}")
            raise ConfigError(f"missing: {', '.join(missing)}")
        return config
