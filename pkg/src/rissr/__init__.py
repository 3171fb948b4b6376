"""RIS-assisted symbiotic radio: modulation, detection, analysis and beamforming design."""

__version__ = "0.1.0"

from .core import (  # noqa: E402
    Beamformer,
    Constellation,
    PhasePair,
    ScenarioConfig,
    dbm_to_watt,
    make_constellation,
    modulate,
    watt_to_dbm,
)
from .channels import ChannelSet, cascades, generate  # noqa: E402
from .detection import build_composite, detect, simulate_errors  # noqa: E402
from .optimizer import InfeasibleError, run_algorithm1  # noqa: E402
from .config import ConfigError, ExperimentSpec, load_config  # noqa: E402

__all__ = [
    "__version__",
    "Beamformer",
    "Constellation",
    "PhasePair",
    "ScenarioConfig",
    "dbm_to_watt",
    "watt_to_dbm",
    "make_constellation",
    "modulate",
    "ChannelSet",
    "cascades",
    "generate",
    "build_composite",
    "detect",
    "simulate_errors",
    "InfeasibleError",
    "run_algorithm1",
    "ConfigError",
    "ExperimentSpec",
    "load_config",
]
