"""immunids: danger-theory immune intrusion detection over a simulated sensor network."""

__version__ = "0.1.0"

from .config import AisParams, ConfigError, ScenarioConfig, derive_seed, load_config

__all__ = [
    "AisParams",
    "ConfigError",
    "ScenarioConfig",
    "derive_seed",
    "load_config",
    "__version__",
]
