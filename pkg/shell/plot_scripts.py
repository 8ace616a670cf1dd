# shell/plot_scripts.py
"""
Standalone matplotlib scripts rendering a result file.

The script only references the result file; the data stays in the file,
so the script bytes depend on the path and the kind alone.
"""

import logging
from pathlib import Path
from typing import Optional

from engine.errors import ConfigError, ResultFileError
from shell.serializers import read_result

logger = logging.getLogger(__name__)

PLOT_KINDS = ("trajectory", "spectrum")

_LOADER = '''\
import json
import sys

import matplotlib.pyplot as plt
import numpy as np

RESULT = {path!r}


def load(path):
    with open(path, encoding="utf-8") as handle:
        text = handle.read()
    if text.lstrip().startswith("{{"):
        document = json.loads(text)
        return document["columns"], np.array(document["rows"], dtype=float)
    lines = [line for line in text.splitlines() if line and not line.startswith("#")]
    columns = lines[0].split(",")
    rows = np.array([[float(cell) for cell in line.split(",")] for line in lines[1:]])
    return columns, rows


columns, rows = load(sys.argv[1] if len(sys.argv) > 1 else RESULT)
data = {{name: rows[:, index] for index, name in enumerate(columns)}}
'''

_TRAJECTORY = '''
t_us = data["t_s"] * 1e6
fig, (top, bottom) = plt.subplots(2, 1, sharex=True, figsize=(7, 6))
for level in range(1, 5):
    top.plot(t_us, data[f"re_rho_{{level}}{{level}}"], label=f"rho{{level}}{{level}}")
top.set_ylabel("population")
top.legend()
bottom.plot(t_us, data["im_rho13_probe"], color="black")
bottom.axhline(0.0, color="grey", linewidth=0.8)
bottom.set_ylabel("Im rho13")
bottom.set_xlabel("time (us)")
fig.tight_layout()
plt.show()
'''

_SPECTRUM = '''
detuning_ghz = data["detuning_radps"] / (2 * np.pi * 1e9)
fig, ax = plt.subplots(figsize=(7, 4))
ax.plot(detuning_ghz, data["transmission"], color="black")
ax.axhline(1.0, color="grey", linestyle="--", linewidth=0.8)
ax.set_xlabel("probe detuning (GHz)")
ax.set_ylabel("transmission")
fig.tight_layout()
plt.show()
'''


def render_plot_script(result_path: "str | Path", kind: str) -> str:
    if kind not in PLOT_KINDS:
        raise ConfigError(f"unknown plot kind '{kind}'; expected one of {', '.join(PLOT_KINDS)}")
    body = _TRAJECTORY if kind == "trajectory" else _SPECTRUM
    return (_LOADER + body).format(path=str(result_path))


def emit_plot_script(result_path: "str | Path", kind: str, script_path: Optional["str | Path"] = None) -> Path:
    """
    Write a plotting script for an existing result file.

    Raises:
        ConfigError for an unknown kind, ResultFileError if the result file
        is missing, garbled or of another kind
    """
    script = render_plot_script(result_path, kind)
    table = read_result(result_path)
    if table.kind != kind:
        raise ResultFileError(f"{result_path} holds a {table.kind} result, not a {kind}")
    result_path = Path(result_path)
    target = Path(script_path) if script_path else result_path.with_name(result_path.stem + "_plot.py")
    target.write_text(script, encoding="utf-8")
    logger.info(f"wrote {kind} plot script to {target}")
    return target
