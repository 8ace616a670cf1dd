# presets/__init__.py
"""
Named run configurations shipped with the simulator.

Each preset is a configuration document (`<name>.conf`) in this directory;
a document can build on another one through its own `scenario` key.
"""

from pathlib import Path
from typing import List

PRESET_DIR = Path(__file__).parent


def list_presets() -> List[str]:
    return sorted(path.stem for path in PRESET_DIR.glob("*.conf"))


def preset_path(name: str) -> Path:
    return PRESET_DIR / f"{name}.conf"


def load_preset_text(name: str) -> str:
    """Raises KeyError naming the available presets when `name` is unknown."""
    path = preset_path(name)
    if not path.is_file():
        raise KeyError(f"unknown scenario '{name}'. Available: {', '.join(list_presets())}, custom")
    return path.read_text(encoding="utf-8")
