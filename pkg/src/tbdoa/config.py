"""Experiment configuration: INI files mapped onto dataclasses.

Sections mirror the pipeline stages (``array``, ``virtual``, ``sector``,
``design``, ``scene``, ``experiment``). Unknown sections or keys are errors
so that a typo cannot silently fall back to a default. Lists are
whitespace- or comma-separated.
"""
from __future__ import annotations

import configparser
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ArrayConfig:
    seed: int = 0
    n_side: int = 8
    aperture: float = 4.0
    jitter: float = 0.25
    rx_count: int = 8
    rx_seed: int = 1
    positions_file: str = ""  # overrides the generator when set
    rx_file: str = ""


@dataclass(frozen=True)
class VirtualConfig:
    kind: str = "ura"
    m1: int = 4
    m2: int = 4
    spacing: float = 0.5


@dataclass(frozen=True)
class SectorConfig:
    theta_min: float = 30.0
    theta_max: float = 40.0
    phi_min: float = 65.0
    phi_max: float = 75.0
    transition_theta: float = 20.0
    transition_phi: float = 15.0
    in_step: float = 1.0
    out_step: float = 2.0


@dataclass(frozen=True)
class DesignConfig:
    method: str = "minimax_sidelobe"
    objective_norm: str = "linf"
    constraint_norm: str = "l1"
    delta: float = 0.1
    gamma: float = 0.5
    modulus: str = "soc"
    facets: int = 8
    max_rounds: int = 60
    file: str = ""  # load this design instead of solving


@dataclass(frozen=True)
class SceneConfig:
    thetas: tuple = (33.0, 39.0)
    phis: tuple = (66.0, 71.0)
    pulses: int = 8
    rcs_variance: float = 1.0


@dataclass(frozen=True)
class ExperimentConfig:
    snr_db: tuple = (0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0)
    trials: int = 1000
    estimators: tuple = ("matrix_esprit", "hosvd_esprit", "tev", "music")
    lut: bool = False
    lut_step: float = 0.1
    music_step: float = 0.1
    crb_draws: int = 100
    error_scales: tuple = (0.5, 1.0, 2.0, 5.0, 10.0)
    seed: int = 0


@dataclass(frozen=True)
class Config:
    array: ArrayConfig = field(default_factory=ArrayConfig)
    virtual: VirtualConfig = field(default_factory=VirtualConfig)
    sector: SectorConfig = field(default_factory=SectorConfig)
    design: DesignConfig = field(default_factory=DesignConfig)
    scene: SceneConfig = field(default_factory=SceneConfig)
    experiment: ExperimentConfig = field(default_factory=ExperimentConfig)

    def validate(self) -> "Config":
        e, s = self.experiment, self.scene
        if e.trials < 1:
            raise ConfigError("experiment.trials must be >= 1")
        if len(s.thetas) != len(s.phis) or not s.thetas:
            raise ConfigError("scene.thetas and scene.phis must be non-empty and of equal length")
        if s.pulses < 1:
            raise ConfigError("scene.pulses must be >= 1")
        for path in (self.array.positions_file, self.array.rx_file, self.design.file):
            if path and not Path(path).is_file():
                raise ConfigError(f"referenced file does not exist: {path}")
        return self

    def with_overrides(self, section: str, **values) -> "Config":
        return replace(self, **{section: replace(getattr(self, section), **values)})


SECTIONS = {f.name: f.default_factory for f in fields(Config)}


def _convert(raw: str, default, where: str):
    try:
        if isinstance(default, bool):
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, tuple):
            items = raw.replace(",", " ").split()
            if default and isinstance(default[0], str):
                return tuple(items)
            return tuple(float(x) for x in items)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        return raw.strip()
    except ValueError as exc:
        raise ConfigError(f"bad value for {where}: {raw!r}") from exc


def _apply(cfg: Config, parser: configparser.ConfigParser, origin: str) -> Config:
    for section in parser.sections():
        if section not in SECTIONS:
            raise ConfigError(f"{origin}: unknown section [{section}]")
        current = getattr(cfg, section)
        known = {f.name: getattr(current, f.name) for f in fields(current)}
        updates = {}
        for key, raw in parser.items(section):
            if key not in known:
                raise ConfigError(f"{origin}: unknown key '{section}.{key}'")
            updates[key] = _convert(raw, known[key], f"{section}.{key}")
        cfg = replace(cfg, **{section: replace(current, **updates)})
    return cfg


def _parser() -> configparser.ConfigParser:
    p = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    p.optionxform = str  # keys are case-sensitive identifiers
    return p


def parse_config(text: str, base: Config | None = None, origin: str = "<string>") -> Config:
    p = _parser()
    try:
        p.read_string(text, source=origin)
    except configparser.Error as exc:
        raise ConfigError(f"{origin}: {exc}") from exc
    return _apply(base or Config(), p, origin)


def load_config(path=None, preset: str | None = None) -> Config:
    """Defaults, then the preset, then the file (later wins)."""
    cfg = Config()
    if preset:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
        cfg = parse_config(PRESETS[preset], cfg, f"preset {preset}")
    if path:
        cfg = parse_config(Path(path).read_text(), cfg, str(path))
    return cfg.validate()


def dump_config(cfg: Config) -> str:
    lines = []
    for name in SECTIONS:
        lines.append(f"[{name}]")
        for key, val in asdict(getattr(cfg, name)).items():
            if isinstance(val, (tuple, list)):
                val = " ".join(str(v) for v in val)
            lines.append(f"{key} = {val}")
        lines.append("")
    return "\n".join(lines)


PRESETS = {
    # beampattern of the Δ = 0.1 design
    "fig1": "[design]\ndelta = 0.1\n",
    # beampattern of the Δ = 0.01 design
    "fig2": "[design]\ndelta = 0.01\n",
    # in-sector interpolation error map, Δ = 0.1
    "fig3": "[design]\ndelta = 0.1\n",
    # CRB of the virtual URA (the L-shaped comparison sets virtual.kind)
    "fig4": "[scene]\npulses = 8\n[experiment]\nsnr_db = 0 5 10 15 20 25 30\n",
    # bias versus interpolation error scale
    "fig5": "[scene]\npulses = 8\nthetas = 33 39\nphis = 66 71\n"
            "[experiment]\nerror_scales = 0.25 0.5 1 2 4 8 16\n",
    # single target RMSE
    "fig6": "[scene]\nthetas = 34\nphis = 66\npulses = 6\n[experiment]\nlut = true\n",
    # two-target RMSE
    "fig7": "[scene]\nthetas = 33 39\nphis = 66 71\npulses = 8\n[experiment]\nlut = true\n",
    # two-target resolution
    "fig8": "[scene]\nthetas = 36 39\nphis = 66 69\npulses = 8\n"
            "[experiment]\nsnr_db = 5 10 15 20 25 30\n",
}
