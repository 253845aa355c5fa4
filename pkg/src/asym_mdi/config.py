"""INI configuration with units spelled out in every key name."""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import io
from importlib import resources
from pathlib import Path

from .errors import ConfigError

# section -> key -> (type, default); a default of ``None`` marks a required key
SCHEMA: dict[str, dict[str, tuple[type, object]]] = {
    "source.spdc": {
        "pump_wavelength_nm": (float, None),
        "pump_sigma_ps": (float, None),
        "filter_order": (int, 1),
        "filter_fwhm_ghz": (float, ""),
        "filter_fwhm_grad_s": (float, ""),
        "grid_points": (int, 512),
        "schmidt_modes": (int, 6),
        "phase_matching": (str, "matched"),
    },
    "source.wcp": {
        "center_wavelength_nm": (float, None),
        "pulse_sigma_ps": (float, None),
        "filter_order": (int, 1),
        "filter_fwhm_ghz": (float, ""),
        "filter_fwhm_grad_s": (float, ""),
    },
    "local": {
        "efficiency": (float, 0.9),
        "dark_count_prob": (float, 1e-6),
    },
    "channel": {
        "attenuation_db_per_km": (float, None),
        "misalignment": (float, None),
        "relay_efficiency": (float, None),
        "relay_dark_count_prob": (float, None),
        "alice_fraction": (float, 0.5),
    },
    "finite": {
        "n_tot": (float, None),
        "xi": (float, None),
        "n_max": (int, 6),
    },
    "sweep": {
        "distance_min_km": (float, 0.0),
        "distance_max_km": (float, 200.0),
        "distance_points": (int, 40),
        "size_min_log10": (float, 8.0),
        "size_max_log10": (float, 14.0),
        "size_points": (int, 13),
        "size_distance_km": (float, 0.0),
        "fixed_indices": (str, "10,40,70"),
        "tau_max_ps": (float, 30.0),
        "tau_points": (int, 121),
    },
    "optimizer": {
        "particles": (int, 40),
        "iterations": (int, 200),
        "inertia": (float, 0.72),
        "cognitive": (float, 1.49),
        "social": (float, 1.49),
        "seed": (int, 0),
        "restart_particles": (int, 20),
        "restart_iterations": (int, 60),
        "workers": (int, 1),
    },
}
REQUIRED_SECTIONS = ("source.spdc", "source.wcp", "channel", "finite")


@dataclasses.dataclass(frozen=True)
class ScenarioConfig:
    values: dict
    text: str

    def section(self, name: str) -> dict:
        return self.values[name]

    def __getitem__(self, name: str) -> dict:
        return self.values[name]

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.text.encode()).hexdigest()

    def resolved_lines(self) -> list[str]:
        lines = []
        for sec in SCHEMA:
            for key, value in self.values[sec].items():
                if value != "":
                    lines.append(f"{sec}.{key} = {value}")
        return lines

    def with_override(self, section: str, key: str, value) -> "ScenarioConfig":
        return self.with_overrides([(section, key, value)])

    def with_overrides(self, items) -> "ScenarioConfig":
        """Copy with ``(section, key, value)`` replacements, validated together.

        An empty string clears an optional key.
        """
        values = {s: dict(v) for s, v in self.values.items()}
        text = self.text
        for section, key, value in items:
            if section not in SCHEMA or key not in SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            kind, default = SCHEMA[section][key]
            if value == "" and default == "":
                values[section][key] = ""
            else:
                values[section][key] = _convert(section, key, str(value), kind)
            text += f"\n# override {section}.{key}={value}\n"
        _check_filters(values)
        _validate(values)
        return ScenarioConfig(values, text)


def _convert(section: str, key: str, raw: str, kind: type):
    try:
        return kind(raw)
    except ValueError:
        raise ConfigError(
            f"[{section}] {key} = {raw!r} is not a valid {kind.__name__}") from None


def parse_config(text: str) -> ScenarioConfig:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse configuration: {exc}") from None
    for sec in REQUIRED_SECTIONS:
        if not parser.has_section(sec):
            raise ConfigError(f"missing required section [{sec}]")
    for sec in parser.sections():
        if sec not in SCHEMA:
            raise ConfigError(f"unknown section [{sec}]; expected one of {sorted(SCHEMA)}")
    values: dict[str, dict] = {}
    for sec, keys in SCHEMA.items():
        present = dict(parser.items(sec)) if parser.has_section(sec) else {}
        for key in present:
            if key not in keys:
                raise ConfigError(
                    f"unknown key {key!r} in [{sec}]; expected one of {sorted(keys)}")
        out = {}
        for key, (kind, default) in keys.items():
            if key in present:
                out[key] = _convert(sec, key, present[key], kind)
            elif default is None:
                raise ConfigError(f"missing required key {key!r} in [{sec}]")
            else:
                out[key] = default
        values[sec] = out
    _check_filters(values)
    _validate(values)
    return ScenarioConfig(values, text)


def _check_filters(values: dict) -> None:
    for sec in ("source.spdc", "source.wcp"):
        ghz, grad = values[sec]["filter_fwhm_ghz"], values[sec]["filter_fwhm_grad_s"]
        if (ghz == "") == (grad == ""):
            raise ConfigError(
                f"[{sec}] needs exactly one of filter_fwhm_ghz (ordinary frequency, GHz) "
                "or filter_fwhm_grad_s (angular frequency, 1e9 rad/s)")


def _in_range(values, sec, key, lo, hi, closed_hi=True):
    v = values[sec][key]
    ok = lo <= v <= hi if closed_hi else lo <= v < hi
    if not ok:
        bracket = "]" if closed_hi else ")"
        raise ConfigError(f"[{sec}] {key} = {v} outside [{lo}, {hi}{bracket}")


def _validate(values: dict) -> None:
    _in_range(values, "local", "efficiency", 0.0, 1.0)
    _in_range(values, "local", "dark_count_prob", 0.0, 1.0, closed_hi=False)
    _in_range(values, "channel", "relay_efficiency", 0.0, 1.0)
    _in_range(values, "channel", "relay_dark_count_prob", 0.0, 1.0, closed_hi=False)
    _in_range(values, "channel", "misalignment", 0.0, 0.5)
    _in_range(values, "channel", "alice_fraction", 0.0, 1.0)
    _in_range(values, "finite", "xi", 1e-300, 1.0, closed_hi=False)
    for sec, key in (("source.spdc", "pump_wavelength_nm"), ("source.spdc", "pump_sigma_ps"),
                     ("source.wcp", "center_wavelength_nm"), ("source.wcp", "pulse_sigma_ps"),
                     ("finite", "n_tot")):
        if not values[sec][key] > 0:
            raise ConfigError(f"[{sec}] {key} must be positive")
    if values["channel"]["attenuation_db_per_km"] < 0:
        raise ConfigError("[channel] attenuation_db_per_km must be non-negative")
    if values["source.spdc"]["phase_matching"] != "matched":
        raise ConfigError("[source.spdc] phase_matching: only 'matched' is configurable")


def load_config(path: str | Path) -> ScenarioConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read configuration {path}: {exc}") from None
    return parse_config(text)


def default_config() -> ScenarioConfig:
    text = resources.files("asym_mdi").joinpath("data/defaults.ini").read_text()
    return parse_config(text)


def render_ini(cfg: ScenarioConfig) -> str:
    parser = configparser.ConfigParser(interpolation=None)
    for sec, vals in cfg.values.items():
        parser[sec] = {k: str(v) for k, v in vals.items() if v != ""}
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()
