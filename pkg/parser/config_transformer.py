# parser/config_transformer.py
"""
Run-configuration parser.

Documents are parsed with the LALR grammar in config.lark, turned into
line-tagged entries by `ConfigTransformer`, layered over any referenced
preset, and finally resolved into SI quantities and validated domain
objects by `build_run_config`.
"""

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from lark import Lark, Transformer, v_args
from lark.exceptions import UnexpectedCharacters, UnexpectedEOF, UnexpectedInput, UnexpectedToken

from engine.core import GAMMA_D1, MASS_H2, MASS_RB85, SpectrumParams, SystemParams
from engine.errors import ConfigError, ParameterError
from engine.liouville import EvolveControls, GeneratorMode
from engine.rates import (DEFAULT_CROSS_SECTION, BufferGasSpec, CellSpec, RateSummary,
                          atomic_density_preset, cross_section_preset, most_probable_speed,
                          number_density_from_pressure, resolve_rates)
from parser.units import Dimension, format_si, to_si
from presets import load_preset_text

logger = logging.getLogger(__name__)

GRAMMAR_PATH = Path(__file__).with_name("config.lark")

# Value kinds besides physical dimensions
WORD = "word"
FLAG = "flag"
DENSITY_OR_PRESET = "density_or_preset"

SCHEMA: Dict[str, Dict[str, Any]] = {
    "system": {
        "scenario": WORD,
        "mode": WORD,
        "omega_pr": Dimension.RATE,
        "omega_pu": Dimension.RATE,
        "delta_pr": Dimension.RATE,
        "delta_pu": Dimension.RATE,
        "delta_hfs": Dimension.RATE,
        "gamma3": Dimension.RATE,
        "gamma4": Dimension.RATE,
        "w12": Dimension.RATE,
        "r34": Dimension.RATE,
        "r43": Dimension.RATE,
        "gamma_laser": Dimension.RATE,
        "lambda_pr": Dimension.LENGTH,
        "lambda_pu": Dimension.LENGTH,
        "u": Dimension.SPEED,
        "temperature": Dimension.TEMPERATURE,
        "atom_mass": Dimension.MASS,
    },
    "cell": {
        "length": Dimension.LENGTH,
        "width": Dimension.LENGTH,
        "thickness": Dimension.LENGTH,
        "temperature": Dimension.TEMPERATURE,
        "atom_mass": Dimension.MASS,
        "include_two_pi": FLAG,
    },
    "buffer": {
        "number_density": Dimension.DENSITY,
        "pressure": Dimension.PRESSURE,
        "sigma1": Dimension.AREA,
        "sigma2": Dimension.AREA,
        "cross_section": WORD,
        "molecule_mass": Dimension.MASS,
        "temperature": Dimension.TEMPERATURE,
    },
    "spectrum": {
        "number_density": DENSITY_OR_PRESET,
        "path_length": Dimension.LENGTH,
        "detuning_min": Dimension.RATE,
        "detuning_max": Dimension.RATE,
        "points": Dimension.COUNT,
        "quadrature_nodes": Dimension.COUNT,
        "literal_integral": FLAG,
    },
    "evolve": {
        "t_end": Dimension.TIME,
        "rel_tol": Dimension.NUMBER,
        "abs_tol": Dimension.NUMBER,
        "max_step": Dimension.TIME,
        "samples": Dimension.COUNT,
        "method": WORD,
    },
    "output": {
        "path": WORD,
        "format": WORD,
        "plot": FLAG,
    },
}

# A key set in a later layer removes these keys inherited from a preset
ALTERNATIVES: Dict[Tuple[str, str], Tuple[Tuple[str, str], ...]] = {
    ("buffer", "number_density"): (("buffer", "pressure"),),
    ("buffer", "pressure"): (("buffer", "number_density"),),
    ("buffer", "sigma1"): (("buffer", "cross_section"),),
    ("buffer", "sigma2"): (("buffer", "cross_section"),),
    ("buffer", "cross_section"): (("buffer", "sigma1"), ("buffer", "sigma2")),
}

# Direct rate keys and the section that would otherwise supply them
DERIVED_RATES = {"w12": "cell", "r34": "buffer", "r43": "buffer"}

REQUIRED_SYSTEM = ("omega_pr", "omega_pu", "gamma3")

OUTPUT_FORMATS = ("csv", "json")
TRUE_WORDS = ("true", "yes", "on")
FALSE_WORDS = ("false", "no", "off")
CUSTOM = "custom"


# === Parse tree -> entries ===

@dataclass(frozen=True)
class RawValue:
    value: Any                 # float for quantities, str for words/strings
    unit: Optional[str]
    is_number: bool


@dataclass(frozen=True)
class SectionHeader:
    name: str
    line: int


@dataclass(frozen=True)
class Assignment:
    key: str
    raw: RawValue
    line: int


@dataclass(frozen=True)
class Entry:
    """One `key = value` line, tagged with where it came from."""
    section: str
    key: str
    raw: RawValue
    line: int
    source: str = "<config>"

    def where(self) -> Optional[int]:
        return self.line if self.source == "<config>" else None

    def describe(self) -> str:
        return f"{self.section}.{self.key}"


@v_args(inline=True)
class ConfigTransformer(Transformer):
    """Turns the parse tree into section headers and assignments."""

    def quantity(self, number, unit=None):
        return RawValue(float(number), str(unit) if unit is not None else None, True)

    def word(self, token):
        return RawValue(str(token), None, False)

    def string(self, token):
        return RawValue(str(token)[1:-1], None, False)

    def section(self, name):
        return SectionHeader(str(name), name.line)

    def assignment(self, name, raw):
        return Assignment(str(name), raw, name.line)

    def start(self, *items):
        return list(items)


_parser: Optional[Lark] = None


def _get_parser() -> Lark:
    global _parser
    if _parser is None:
        grammar = GRAMMAR_PATH.read_text(encoding="utf-8")
        _parser = Lark(grammar, start="start", parser="lalr", transformer=ConfigTransformer())
    return _parser


def read_entries(text: str, source: str = "<config>") -> List[Entry]:
    """
    Parse a document into schema-checked entries.

    Raises:
        ConfigError with the line number of the offending line
    """
    if not text.endswith("\n"):
        text += "\n"
    try:
        items = _get_parser().parse(text)
    except UnexpectedEOF as e:
        raise ConfigError(f"{source}: unexpected end of document", line=text.count("\n")) from e
    except UnexpectedCharacters as e:
        raise ConfigError(f"{source}: unexpected character {text[e.pos_in_stream]!r} "
                          f"at column {e.column}", line=e.line) from e
    except UnexpectedToken as e:
        raise ConfigError(f"{source}: unexpected {e.token.type} {str(e.token).strip()!r}",
                          line=e.line) from e
    except UnexpectedInput as e:
        raise ConfigError(f"{source}: malformed line", line=getattr(e, "line", None)) from e

    entries: List[Entry] = []
    seen: Dict[Tuple[str, str], int] = {}
    section = "system"
    for item in items:
        if isinstance(item, SectionHeader):
            if item.name not in SCHEMA:
                raise ConfigError(f"unknown section [{item.name}]; expected one of "
                                  f"{', '.join('[' + s + ']' for s in SCHEMA)}", line=item.line)
            section = item.name
            continue
        if item.key not in SCHEMA[section]:
            raise ConfigError(f"unknown key '{item.key}' in [{section}]; expected one of "
                              f"{', '.join(SCHEMA[section])}", line=item.line)
        if (section, item.key) in seen:
            raise ConfigError(f"duplicate key '{item.key}' in [{section}] "
                              f"(first set on line {seen[(section, item.key)]})", line=item.line)
        seen[(section, item.key)] = item.line
        entries.append(Entry(section, item.key, item.raw, item.line, source))
    return entries


def expand_presets(entries: List[Entry], stack: Tuple[str, ...] = ()) -> Dict[Tuple[str, str], Entry]:
    """Layer `entries` over the preset named by their `scenario` key."""
    layered: Dict[Tuple[str, str], Entry] = {}
    scenario = next((e for e in entries if (e.section, e.key) == ("system", "scenario")), None)
    if scenario is not None and str(scenario.raw.value) != CUSTOM:
        name = str(scenario.raw.value)
        if name in stack:
            raise ConfigError(f"preset '{name}' includes itself ({' -> '.join(stack + (name,))})",
                              line=scenario.where())
        try:
            text = load_preset_text(name)
        except KeyError as e:
            raise ConfigError(str(e.args[0]), line=scenario.where()) from e
        layered.update(expand_presets(read_entries(text, f"preset {name}"), stack + (name,)))
    for entry in entries:
        for other in ALTERNATIVES.get((entry.section, entry.key), ()):
            if other in layered and layered[other].source != entry.source:
                del layered[other]
        layered[(entry.section, entry.key)] = entry
    return layered


# === Entries -> RunConfig ===

@dataclass(frozen=True)
class RunConfig:
    """Fully resolved run configuration (SI units, rad/s for rates)."""
    system: SystemParams
    scenario: str = CUSTOM
    mode: GeneratorMode = GeneratorMode.TRACE_CONSERVING
    cell: Optional[CellSpec] = None
    buffer: Optional[BufferGasSpec] = None
    gas_temperature: Optional[float] = None
    include_two_pi: bool = True
    spectrum: Optional[SpectrumParams] = None
    evolve: EvolveControls = field(default_factory=EvolveControls)
    t_end: Optional[float] = None
    output_path: Optional[str] = None
    output_format: str = "csv"
    emit_plot_script: bool = False
    rates: RateSummary = field(default_factory=RateSummary, compare=False)

    def replace(self, **changes: Any) -> "RunConfig":
        return replace(self, **changes)


class _Resolver:
    """Converts layered entries to SI values, tracking the line of each."""

    def __init__(self, layered: Dict[Tuple[str, str], Entry]):
        self.layered = layered
        self.gamma3 = GAMMA_D1
        if ("system", "gamma3") in layered:
            self.gamma3 = self.quantity("system", "gamma3")

    def has(self, section: str, key: str) -> bool:
        return (section, key) in self.layered

    def section_present(self, section: str) -> bool:
        return any(s == section for s, _ in self.layered)

    def entry(self, section: str, key: str) -> Entry:
        return self.layered[(section, key)]

    def quantity(self, section: str, key: str, default: Any = None) -> Any:
        if not self.has(section, key):
            return default
        entry = self.entry(section, key)
        dimension = SCHEMA[section][key]
        if dimension == DENSITY_OR_PRESET:
            if not entry.raw.is_number:
                try:
                    return atomic_density_preset(str(entry.raw.value))
                except ParameterError as e:
                    raise ConfigError(e.message, line=entry.where()) from e
            dimension = Dimension.DENSITY
        if not entry.raw.is_number:
            raise ConfigError(f"{entry.describe()} expects a {dimension.value}, got "
                              f"'{entry.raw.value}'", line=entry.where(),
                              expected_dimension=dimension.value)
        try:
            value = to_si(entry.raw.value, entry.raw.unit, dimension, self.gamma3)
        except ValueError as e:
            raise ConfigError(f"{entry.describe()}: {e}", line=entry.where(),
                              expected_dimension=dimension.value) from e
        if dimension is Dimension.COUNT and value != int(value):
            raise ConfigError(f"{entry.describe()} must be an integer", line=entry.where(),
                              expected_dimension=dimension.value)
        return int(value) if dimension is Dimension.COUNT else value

    def word(self, section: str, key: str, default: Optional[str] = None) -> Optional[str]:
        if not self.has(section, key):
            return default
        entry = self.entry(section, key)
        if entry.raw.is_number:
            raise ConfigError(f"{entry.describe()} expects a name, got a number", line=entry.where())
        return str(entry.raw.value)

    def flag(self, section: str, key: str, default: bool) -> bool:
        text = self.word(section, key)
        if text is None:
            return default
        if text.lower() in TRUE_WORDS:
            return True
        if text.lower() in FALSE_WORDS:
            return False
        raise ConfigError(f"{section}.{key} expects true or false, got '{text}'",
                          line=self.entry(section, key).where())

    def fail_on(self, section: str, key: str, error: ParameterError) -> ConfigError:
        line = self.entry(section, key).where() if self.has(section, key) else None
        return ConfigError(f"[{section}] {error.message}", line=line)


def _build_cell(res: _Resolver) -> Optional[CellSpec]:
    if not res.section_present("cell"):
        return None
    missing = [k for k in ("length", "width", "thickness", "temperature") if not res.has("cell", k)]
    if missing:
        raise ConfigError(f"[cell] is missing {', '.join(missing)}")
    atom_mass = res.quantity("cell", "atom_mass", res.quantity("system", "atom_mass", MASS_RB85))
    values = {k: res.quantity("cell", k) for k in ("length", "width", "thickness", "temperature")}
    try:
        return CellSpec(atom_mass=atom_mass, **values)
    except ParameterError as e:
        raise res.fail_on("cell", e.field_name, e) from e


def _build_buffer(res: _Resolver, cell: Optional[CellSpec]) -> Tuple[Optional[BufferGasSpec], Optional[float]]:
    if not res.section_present("buffer"):
        return None, None
    temperature = res.quantity("buffer", "temperature")
    if temperature is None and cell is not None:
        temperature = cell.temperature
    if temperature is None:
        temperature = res.quantity("system", "temperature")
    if temperature is None:
        raise ConfigError("[buffer] needs a temperature (buffer, cell or system temperature)")

    if res.has("buffer", "number_density") and res.has("buffer", "pressure"):
        raise ConfigError("[buffer] sets both number_density and pressure",
                          line=res.entry("buffer", "pressure").where())
    if res.has("buffer", "number_density"):
        density = res.quantity("buffer", "number_density")
    elif res.has("buffer", "pressure"):
        density = number_density_from_pressure(res.quantity("buffer", "pressure"), temperature)
    else:
        raise ConfigError("[buffer] is missing number_density (or pressure)")

    if res.has("buffer", "cross_section") and (res.has("buffer", "sigma1") or res.has("buffer", "sigma2")):
        raise ConfigError("[buffer] sets both cross_section and sigma1/sigma2",
                          line=res.entry("buffer", "cross_section").where())
    if res.has("buffer", "sigma1") or res.has("buffer", "sigma2"):
        if not (res.has("buffer", "sigma1") and res.has("buffer", "sigma2")):
            raise ConfigError("[buffer] needs both sigma1 and sigma2")
        sigma1, sigma2 = res.quantity("buffer", "sigma1"), res.quantity("buffer", "sigma2")
    else:
        name = res.word("buffer", "cross_section", DEFAULT_CROSS_SECTION)
        try:
            sigma1, sigma2, _ = cross_section_preset(name)
        except ParameterError as e:
            raise res.fail_on("buffer", "cross_section", e) from e

    try:
        gas = BufferGasSpec(density, sigma1, sigma2, res.quantity("buffer", "molecule_mass", MASS_H2))
    except ParameterError as e:
        raise res.fail_on("buffer", e.field_name, e) from e
    return gas, temperature


def _build_spectrum(res: _Resolver) -> Optional[SpectrumParams]:
    if not res.section_present("spectrum"):
        return None
    required = ("number_density", "path_length", "detuning_min", "detuning_max", "points")
    missing = [k for k in required if not res.has("spectrum", k)]
    if missing:
        raise ConfigError(f"[spectrum] is missing {', '.join(missing)}")
    try:
        return SpectrumParams.uniform_grid(
            res.quantity("spectrum", "number_density"),
            res.quantity("spectrum", "path_length"),
            res.quantity("spectrum", "detuning_min"),
            res.quantity("spectrum", "detuning_max"),
            res.quantity("spectrum", "points"),
            res.quantity("spectrum", "quadrature_nodes", 64),
            literal_integral=res.flag("spectrum", "literal_integral", False),
        )
    except ParameterError as e:
        raise res.fail_on("spectrum", e.field_name, e) from e


def _build_evolve(res: _Resolver) -> EvolveControls:
    defaults = EvolveControls()
    return EvolveControls(
        rel_tol=res.quantity("evolve", "rel_tol", defaults.rel_tol),
        abs_tol=res.quantity("evolve", "abs_tol", defaults.abs_tol),
        max_step=res.quantity("evolve", "max_step", defaults.max_step),
        method=res.word("evolve", "method", defaults.method),
        samples=res.quantity("evolve", "samples", defaults.samples),
    )


def build_run_config(layered: Dict[Tuple[str, str], Entry]) -> RunConfig:
    """Resolve layered entries into a validated RunConfig."""
    res = _Resolver(layered)

    cell = _build_cell(res)
    buffer, gas_temperature = _build_buffer(res, cell)

    missing = [f"system.{k}" for k in REQUIRED_SYSTEM if not res.has("system", k)]
    suppliers = {"cell": cell, "buffer": buffer}
    for key, section in DERIVED_RATES.items():
        direct = res.has("system", key)
        derived = suppliers[section] is not None
        if direct and derived:
            raise ConfigError(f"{key} is given directly and would also be derived from [{section}]; "
                              f"remove one of them", line=res.entry("system", key).where())
        if not direct and not derived:
            missing.append(f"system.{key} (or [{section}])")
    if missing:
        raise ConfigError(f"missing required keys: {', '.join(missing)}")

    include_two_pi = res.flag("cell", "include_two_pi", True)
    rates = resolve_rates(cell, buffer, include_two_pi, gas_temperature)

    values: Dict[str, float] = {}
    for key in ("omega_pr", "omega_pu", "delta_pr", "delta_pu", "delta_hfs", "gamma4",
                "w12", "r34", "r43", "gamma_laser", "lambda_pr", "lambda_pu", "u"):
        if res.has("system", key):
            values[key] = res.quantity("system", key)
    values["gamma3"] = res.gamma3
    for key in ("w12", "r34", "r43"):
        if getattr(rates, key) is not None:
            values[key] = getattr(rates, key)
    if "u" not in values:
        if rates.u is not None:
            values["u"] = rates.u
        elif res.has("system", "temperature"):
            values["u"] = most_probable_speed(res.quantity("system", "temperature"),
                                              res.quantity("system", "atom_mass", MASS_RB85))
    try:
        system = SystemParams.from_dict(values)
    except ParameterError as e:
        raise res.fail_on("system", e.field_name, e) from e

    try:
        mode = GeneratorMode.parse(res.word("system", "mode", GeneratorMode.TRACE_CONSERVING.value))
    except ValueError as e:
        raise ConfigError(str(e), line=res.entry("system", "mode").where()) from e

    output_format = res.word("output", "format", "csv")
    if output_format not in OUTPUT_FORMATS:
        raise ConfigError(f"output.format must be one of {', '.join(OUTPUT_FORMATS)}",
                          line=res.entry("output", "format").where())

    config = RunConfig(
        system=system,
        scenario=res.word("system", "scenario", CUSTOM),
        mode=mode,
        cell=cell,
        buffer=buffer,
        gas_temperature=gas_temperature,
        include_two_pi=include_two_pi,
        spectrum=_build_spectrum(res),
        evolve=_build_evolve(res),
        t_end=res.quantity("evolve", "t_end"),
        output_path=res.word("output", "path"),
        output_format=output_format,
        emit_plot_script=res.flag("output", "plot", False),
        rates=rates,
    )
    logger.debug(f"resolved config '{config.scenario}': {system.to_dict()}")
    return config


def parse_config(text: str) -> RunConfig:
    """
    Parse a configuration document into a validated RunConfig.

    Raises:
        ConfigError: malformed lines, unknown keys, unit mismatches, missing
            or conflicting rate sources
    """
    return build_run_config(expand_presets(read_entries(text)))


def load_config(path: "str | Path") -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config file {path}: {e.strerror}") from e
    return parse_config(text)


# === RunConfig -> text ===

def _line(key: str, value: float, dimension: Dimension) -> str:
    return f"{key} = {format_si(value, dimension)}"


def _flag(value: bool) -> str:
    return "true" if value else "false"


def serialize_config(config: RunConfig) -> str:
    """
    Write a RunConfig back as a document in SI units.
    parse_config(serialize_config(c)) == c.
    """
    params = config.system
    derived = {key for key, section in DERIVED_RATES.items()
               if getattr(config, "cell" if section == "cell" else "buffer") is not None}
    lines = ["# resolved configuration (SI units, rates in rad/s)", "[system]",
             f"scenario = {config.scenario}", f"mode = {config.mode.value}"]
    for key in ("gamma3", "gamma4", "omega_pr", "omega_pu", "delta_pr", "delta_pu", "delta_hfs",
                "w12", "r34", "r43", "gamma_laser"):
        if key not in derived:
            lines.append(_line(key, getattr(params, key), Dimension.RATE))
    lines.append(_line("lambda_pr", params.lambda_pr, Dimension.LENGTH))
    lines.append(_line("lambda_pu", params.lambda_pu, Dimension.LENGTH))
    lines.append(_line("u", params.u, Dimension.SPEED))

    if config.cell is not None:
        cell = config.cell
        lines += ["", "[cell]",
                  _line("length", cell.length, Dimension.LENGTH),
                  _line("width", cell.width, Dimension.LENGTH),
                  _line("thickness", cell.thickness, Dimension.LENGTH),
                  _line("temperature", cell.temperature, Dimension.TEMPERATURE),
                  _line("atom_mass", cell.atom_mass, Dimension.MASS),
                  f"include_two_pi = {_flag(config.include_two_pi)}"]
    if config.buffer is not None:
        gas = config.buffer
        lines += ["", "[buffer]",
                  _line("number_density", gas.number_density, Dimension.DENSITY),
                  _line("sigma1", gas.sigma1, Dimension.AREA),
                  _line("sigma2", gas.sigma2, Dimension.AREA),
                  _line("molecule_mass", gas.molecule_mass, Dimension.MASS),
                  _line("temperature", config.gas_temperature, Dimension.TEMPERATURE)]
    if config.spectrum is not None:
        sp = config.spectrum.to_dict()
        lines += ["", "[spectrum]",
                  _line("number_density", sp["number_density"], Dimension.DENSITY),
                  _line("path_length", sp["path_length"], Dimension.LENGTH),
                  _line("detuning_min", sp["detuning_min"], Dimension.RATE),
                  _line("detuning_max", sp["detuning_max"], Dimension.RATE),
                  f"points = {sp['points']}",
                  f"quadrature_nodes = {sp['quadrature_nodes']}",
                  f"literal_integral = {_flag(sp['literal_integral'])}"]

    controls = config.evolve
    lines += ["", "[evolve]",
              f"rel_tol = {controls.rel_tol!r}",
              f"abs_tol = {controls.abs_tol!r}",
              f"samples = {int(controls.samples)}",
              f"method = {controls.method}"]
    if config.t_end is not None:
        lines.append(_line("t_end", config.t_end, Dimension.TIME))
    if controls.max_step is not None:
        lines.append(_line("max_step", controls.max_step, Dimension.TIME))

    lines += ["", "[output]", f"format = {config.output_format}",
              f"plot = {_flag(config.emit_plot_script)}"]
    if config.output_path is not None:
        lines.append(f'path = "{config.output_path}"')
    return "\n".join(lines) + "\n"
