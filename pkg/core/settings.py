import os
import logging
from pathlib import Path
from typing import Any, Dict

import yaml
from dotenv import load_dotenv
from environs import Env

load_dotenv()

env = Env()

BASE_DIR = Path(__file__).resolve().parent.parent

ENV = env.str("ENV", "development")

config_file = BASE_DIR / f"config/{ENV}.yaml"
config: Dict[str, Any] = {}

if config_file.exists():
    with open(config_file, "r") as f:
        config = yaml.safe_load(f) or {}


class FlexibleDict(dict):
    __getattr__ = dict.__getitem__
    __setattr__ = dict.__setitem__
    __delattr__ = dict.__delitem__


def _default_threads() -> int:
    return max(1, min(8, os.cpu_count() or 1))


class Settings(FlexibleDict):

    def __init__(self):
        super().__init__()

        self.ENV = ENV

        self.LOG_LEVEL = env.str("LOG_LEVEL", "INFO")
        self.LOG_FORMAT = env.str("LOG_FORMAT", "%(asctime)s - %(name)s - %(levelname)s - %(message)s")
        self.LOG_JSON = env.bool("LOG_JSON", False)

        self.REGROWTH_THREADS = env.int("REGROWTH_THREADS", _default_threads())

        self.DEFAULT_CONFIG = env.str("DEFAULT_CONFIG", str(BASE_DIR / "config/runs/default.yaml"))
        self.DEFAULT_OUT = env.str("DEFAULT_OUT", "out")
        self.METRICS_FILE = env.str("METRICS_FILE", "")

        for key, value in config.items():
            self[key.upper()] = value

        # the environment always wins over the yaml for the thread cap
        if "REGROWTH_THREADS" in os.environ:
            self.REGROWTH_THREADS = env.int("REGROWTH_THREADS")
        self.REGROWTH_THREADS = max(1, int(self.REGROWTH_THREADS))

        if not Path(self.DEFAULT_CONFIG).is_absolute():
            self.DEFAULT_CONFIG = str(BASE_DIR / self.DEFAULT_CONFIG)


settings = Settings()

logging.basicConfig(
    level=getattr(logging, settings.LOG_LEVEL),
    format=settings.LOG_FORMAT
)
