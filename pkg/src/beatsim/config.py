"""Run configuration: INI-style ``key = value`` files with sections.

Physical inputs are given either in units of ``gamma`` (``units = gamma``)
or as cyclic frequencies in MHz (``units = mhz``), converted with the single
declared factor ``gamma_mhz`` (the value of ``gamma / 2 pi`` in MHz).  Times
are always in units of ``1/gamma``.  The physics modules only ever see
``gamma`` units.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import math
import re
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from .model import AtomParams

# Rb D2 natural linewidth gamma/2pi
RB_GAMMA_MHZ = 6.0666
# bare beat of 4.7 MHz in a 5 G field
RB85_5G_BEAT_MHZ = 4.7


class ConfigError(ValueError):
    """Invalid configuration, with the offending location when known."""


@dataclass(frozen=True)
class Units:
    """Conversion between ``gamma`` units and lab MHz."""

    gamma_mhz: float = RB_GAMMA_MHZ

    def to_gamma(self, value_mhz: float) -> float:
        """Cyclic frequency in MHz to an angular rate in units of ``gamma``."""
        return value_mhz / self.gamma_mhz

    def to_mhz(self, value_gamma: float) -> float:
        return value_gamma * self.gamma_mhz

    def cycles_to_mhz(self, freq: float) -> float:
        """Spectral frequency in cycles per ``1/gamma`` to MHz."""
        return self.to_mhz(2.0 * math.pi * freq)


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved run configuration, all physics in ``gamma`` units.

    The defaults reproduce the sample-trajectory parameter set: equal
    scattering rates with ``delta_plus = -delta_minus = 0.5 gamma`` and two
    drive strengths.
    """

    delta0: float = 0.0
    delta_g: float = 0.1
    delta_e: float = 0.6
    gamma_mhz: float = RB_GAMMA_MHZ
    omegas: tuple = (0.075, 0.125)
    coupling_g: float = 1.0
    photon_numbers: tuple | None = None
    saturation: bool = False
    n_traj: int = 200
    t_max: float = 1000.0
    grid_dt: float = 1.0
    t_start: float = 0.0
    master_seed: int | None = None
    n_batches: int = 5
    window_tau: float | None = None
    zero_pad_factor: int = 8
    window: str = "none"
    identity_tol: float = 1e-10
    limit_tol: float = 0.05
    oracle_tol: float = 1e-10
    n_sigma: float = 3.0
    mc_traj: int = 400
    splits: tuple = (0.001, 0.005, 0.01, 0.05, 0.1, 0.25, 0.5)
    output_dir: str = "out"
    threads: int = 1
    annotations: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("delta0", "delta_g", "delta_e", "gamma_mhz", "coupling_g", "t_max",
                     "grid_dt", "t_start", "limit_tol", "n_sigma"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigError(f"{name} must be finite")
        if not self.omegas:
            raise ConfigError("drive sweep must not be empty")
        if any(not math.isfinite(w) or w < 0 for w in self.omegas):
            raise ConfigError("drive strengths must be finite and non-negative")
        if self.gamma_mhz <= 0 or self.coupling_g <= 0:
            raise ConfigError("gamma_mhz and coupling_g must be positive")
        if self.n_traj < 1:
            raise ConfigError("n_traj must be positive")
        if self.t_max <= 0 or self.grid_dt <= 0:
            raise ConfigError("t_max and grid_dt must be positive")
        if self.master_seed is not None and not 0 <= self.master_seed < 2 ** 64:
            raise ConfigError("master_seed must be an unsigned 64-bit integer")
        if self.window not in ("none", "hann"):
            raise ConfigError(f"unknown spectral window {self.window!r}")
        if self.window_tau is not None and not self.window_tau > 0:
            raise ConfigError("window_tau must be positive or 'none'")
        self.atom(0.0)  # validates the Zeeman shifts

    @property
    def units(self) -> Units:
        return Units(self.gamma_mhz)

    def atom(self, omega: float) -> AtomParams:
        try:
            return AtomParams(delta0=self.delta0, delta_g=self.delta_g,
                              delta_e=self.delta_e, omega=omega)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    @property
    def sweep_n(self) -> tuple:
        """Photon numbers ``n = (omega/g)^2`` of the drive points."""
        if self.photon_numbers is not None:
            return self.photon_numbers
        return tuple((w / self.coupling_g) ** 2 for w in self.omegas)

    def require_seed(self) -> int:
        if self.master_seed is None:
            raise ConfigError("master_seed is required (set [simulation] master_seed or --seed)")
        return self.master_seed

    def digest(self) -> str:
        """SHA-256 of the physics-relevant settings (excludes output location and threads)."""
        payload = asdict(self)
        payload.pop("output_dir")
        payload.pop("threads")
        blob = json.dumps(payload, sort_keys=True, default=repr).encode()
        return hashlib.sha256(blob).hexdigest()

    def with_overrides(self, **changes) -> "RunConfig":
        return replace(self, **{k: v for k, v in changes.items() if v is not None})


_SECTIONS = {
    "atom": {"units", "gamma_mhz", "preset", "delta0", "delta_g", "delta_e"},
    "drive": {"omega", "photon_numbers", "coupling_g", "saturation"},
    "simulation": {"n_traj", "t_max", "grid_dt", "t_start", "master_seed", "n_batches"},
    "spectrum": {"window_tau", "zero_pad_factor", "window"},
    "validate": {"identity_tol", "limit_tol", "oracle_tol", "n_sigma", "mc_traj"},
    "compare": {"splits"},
    "output": {"directory"},
    "annotations": None,  # free-form, copied into outputs
}


def _line_of(text: str, section: str, key: str) -> int | None:
    current = None
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        head = re.fullmatch(r"\[([^\]]+)\]", stripped)
        if head:
            current = head.group(1).strip().lower()
        elif current == section and re.match(rf"{re.escape(key)}\s*[=:]", stripped, re.I):
            return lineno
    return None


class _Reader:
    def __init__(self, parser: configparser.ConfigParser, text: str, source: str):
        self.parser = parser
        self.text = text
        self.source = source

    def fail(self, section, key, message):
        line = _line_of(self.text, section, key)
        where = f"{self.source}:{line}" if line else self.source
        raise ConfigError(f"{where}: [{section}] {key}: {message}")

    def get(self, section, key, convert, default):
        if not self.parser.has_option(section, key):
            return default
        raw = self.parser.get(section, key).strip()
        try:
            return convert(raw)
        except (TypeError, ValueError) as exc:
            self.fail(section, key, f"cannot parse {raw!r} ({exc})")


def _float_list(raw: str) -> tuple:
    items = [x for x in re.split(r"[,\s]+", raw) if x]
    if not items:
        raise ValueError("empty list")
    return tuple(float(x) for x in items)


def _optional_float(raw: str):
    return None if raw.lower() in ("none", "inf", "") else float(raw)


def _bool(raw: str) -> bool:
    low = raw.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected a boolean")


def _seed(raw: str) -> int:
    value = int(raw, 0)
    if not 0 <= value < 2 ** 64:
        raise ValueError("seed must be an unsigned 64-bit integer")
    return value


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    """Parse configuration text into a :class:`RunConfig`."""
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    for section in parser.sections():
        if section not in _SECTIONS:
            lineno = next((i for i, line in enumerate(text.splitlines(), 1)
                           if line.strip().lower() == f"[{section}]"), "?")
            raise ConfigError(f"{source}:{lineno}: unknown section [{section}]")
        allowed = _SECTIONS[section]
        if allowed is None:
            continue
        for key in parser.options(section):
            if key not in allowed:
                r = _Reader(parser, text, source)
                r.fail(section, key, "unknown key")
    r = _Reader(parser, text, source)
    d = RunConfig()

    units = r.get("atom", "units", str.lower, "gamma")
    if units not in ("gamma", "mhz"):
        r.fail("atom", "units", "must be 'gamma' or 'mhz'")
    gamma_mhz = r.get("atom", "gamma_mhz", float, d.gamma_mhz)
    if not gamma_mhz > 0:
        r.fail("atom", "gamma_mhz", "must be positive")
    conv = Units(gamma_mhz).to_gamma if units == "mhz" else float

    def freq(section, key, default):
        value = r.get(section, key, float, None)
        return default if value is None else conv(value)

    preset = r.get("atom", "preset", str.lower, None)
    delta_g_default = d.delta_g
    if preset is not None:
        if preset != "rb85_5g":
            r.fail("atom", "preset", "only 'rb85_5g' is known")
        # bare beat 2 delta_g / 2pi equals the natural Larmor beat
        delta_g_default = Units(gamma_mhz).to_gamma(RB85_5G_BEAT_MHZ / 2.0)

    coupling_g = freq("drive", "coupling_g", d.coupling_g)
    photon_numbers = r.get("drive", "photon_numbers", _float_list, None)
    omegas = r.get("drive", "omega", _float_list, None)
    if photon_numbers is not None and omegas is not None:
        r.fail("drive", "omega", "give either omega or photon_numbers, not both")
    if photon_numbers is not None:
        if any(n < 0 for n in photon_numbers):
            r.fail("drive", "photon_numbers", "must be non-negative")
        omegas = tuple(coupling_g * math.sqrt(n) for n in photon_numbers)
    elif omegas is not None:
        omegas = tuple(conv(w) for w in omegas)
    else:
        omegas = d.omegas

    annotations = dict(parser.items("annotations")) if parser.has_section("annotations") else {}
    try:
        return RunConfig(
            delta0=freq("atom", "delta0", d.delta0),
            delta_g=freq("atom", "delta_g", delta_g_default),
            delta_e=freq("atom", "delta_e", d.delta_e if preset is None else delta_g_default + 0.5),
            gamma_mhz=gamma_mhz,
            omegas=omegas,
            coupling_g=coupling_g,
            photon_numbers=photon_numbers,
            saturation=r.get("drive", "saturation", _bool, d.saturation),
            n_traj=r.get("simulation", "n_traj", int, d.n_traj),
            t_max=r.get("simulation", "t_max", float, d.t_max),
            grid_dt=r.get("simulation", "grid_dt", float, d.grid_dt),
            t_start=r.get("simulation", "t_start", float, d.t_start),
            master_seed=r.get("simulation", "master_seed", _seed, d.master_seed),
            n_batches=r.get("simulation", "n_batches", int, d.n_batches),
            window_tau=r.get("spectrum", "window_tau", _optional_float, d.window_tau),
            zero_pad_factor=r.get("spectrum", "zero_pad_factor", int, d.zero_pad_factor),
            window=r.get("spectrum", "window", str.lower, d.window),
            identity_tol=r.get("validate", "identity_tol", float, d.identity_tol),
            limit_tol=r.get("validate", "limit_tol", float, d.limit_tol),
            oracle_tol=r.get("validate", "oracle_tol", float, d.oracle_tol),
            n_sigma=r.get("validate", "n_sigma", float, d.n_sigma),
            mc_traj=r.get("validate", "mc_traj", int, d.mc_traj),
            splits=r.get("compare", "splits", _float_list, d.splits),
            output_dir=r.get("output", "directory", str, d.output_dir),
            annotations=annotations,
        )
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from exc


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, source=str(path))
