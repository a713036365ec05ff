"""Phase-field topology optimisation with overhang-penalising anisotropies."""

from .anisotropy import Anisotropy, dual_norm, gamma_eval, sample_frank, sample_wulff
from .config import parse_config, print_config
from .driver import SimConfig, interface_roughness, run, scenario
from .elasticity import ElasticityModel, LoadSpec
from .mesh import build_mesh

__all__ = [
    "Anisotropy",
    "ElasticityModel",
    "LoadSpec",
    "SimConfig",
    "build_mesh",
    "dual_norm",
    "gamma_eval",
    "interface_roughness",
    "parse_config",
    "print_config",
    "run",
    "sample_frank",
    "sample_wulff",
    "scenario",
]

__version__ = "0.1.0"
