"""
owi-sim Parser Module
Run-configuration grammar, unit conversion and preset layering
"""

from .config_transformer import RunConfig, load_config, parse_config, serialize_config
from .units import Dimension, to_si

__all__ = ['RunConfig', 'load_config', 'parse_config', 'serialize_config', 'Dimension', 'to_si']
