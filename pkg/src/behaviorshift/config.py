"""Pipeline configuration read from an INI-style ``key = value`` file."""

import configparser
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .exceptions import ConfigError


@dataclass
class Paths:
    events: Path = None
    features: Path = Path("features.csv")
    model: Path = Path("models.json")
    trace: Path = Path("trace.csv")
    alarms: Path = Path("alarms.csv")
    truth: Path = Path("events_truth.csv")
    report: Path = Path("report.json")


@dataclass
class FeaturizeParams:
    utc_offset_hours: float = 0.0
    home_radius_m: float = 250.0
    home_window_days: int = 14


@dataclass
class MixtureParams:
    k_min: int = 1
    k_max: int = 8
    tol: float = 1e-6
    max_iter: int = 200
    restarts: int = 5


@dataclass
class CpdParams:
    samples: int = 100
    alpha0: float = 1.0
    hazard: float = 0.01
    prune_threshold: float = 1e-8
    max_support: int = 1464
    recent_window: int = 7


@dataclass
class DetectorParams:
    epsilon: int = 1
    min_drop: int = 5
    refractory: int = 3


@dataclass
class EvalParams:
    window: int = 7
    score: str = "recent"


@dataclass
class SimulateParams:
    scenario: str = ""
    patients: int = 20
    n_days: int = 200
    separation: float = 5.0
    max_event_lag: int = 6


@dataclass
class PipelineConfig:
    paths: Paths = field(default_factory=Paths)
    featurize: FeaturizeParams = field(default_factory=FeaturizeParams)
    mixture: MixtureParams = field(default_factory=MixtureParams)
    cpd: CpdParams = field(default_factory=CpdParams)
    detector: DetectorParams = field(default_factory=DetectorParams)
    evaluation: EvalParams = field(default_factory=EvalParams)
    simulate: SimulateParams = field(default_factory=SimulateParams)
    seed: int = 0
    patients: list = None

    def validate(self):
        m, c, d = self.mixture, self.cpd, self.detector
        checks = [
            (1 <= m.k_min <= m.k_max, "mixture: need 1 <= k_min <= k_max"),
            (m.tol > 0 and m.max_iter >= 1 and m.restarts >= 1,
             "mixture: tol > 0, max_iter >= 1, restarts >= 1"),
            (c.samples >= 1, "cpd: samples must be >= 1"),
            (c.alpha0 > 0, "cpd: alpha0 must be > 0"),
            (0 < c.hazard < 1, "cpd: hazard must lie in (0, 1)"),
            (0 <= c.prune_threshold < 1, "cpd: prune_threshold must lie in [0, 1)"),
            (c.max_support >= 2, "cpd: max_support must be >= 2"),
            (c.recent_window >= 1, "cpd: recent_window must be >= 1"),
            (d.epsilon >= 0 and d.min_drop >= 1 and d.refractory >= 0,
             "detector: epsilon >= 0, min_drop >= 1, refractory >= 0"),
            (self.evaluation.window >= 1, "evaluation: window must be >= 1"),
            (self.evaluation.score in ("recent", "change"),
             "evaluation: score must be 'recent' or 'change'"),
            (self.featurize.home_radius_m > 0, "featurize: home_radius_m must be > 0"),
            (0 <= self.simulate.max_event_lag, "simulate: max_event_lag must be >= 0"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)
        return self

    def as_dict(self):
        out = asdict(self)
        out["paths"] = {k: None if v is None else str(v) for k, v in out["paths"].items()}
        return out


SECTIONS = {
    "paths": Paths,
    "featurize": FeaturizeParams,
    "mixture": MixtureParams,
    "cpd": CpdParams,
    "detector": DetectorParams,
    "evaluation": EvalParams,
    "simulate": SimulateParams,
}


def _coerce(cls, key, text, base):
    types = {f.name: f.default for f in fields(cls)}
    if key not in types:
        raise ConfigError(f"unknown key {key!r} in [{cls.__name__}]")
    default = types[key]
    try:
        if cls is Paths:
            p = Path(text)
            return p if p.is_absolute() else base / p
        if isinstance(default, bool):
            return text.lower() in ("1", "true", "yes", "on")
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        return text
    except ValueError:
        raise ConfigError(f"bad value {text!r} for {key}") from None


def load_config(path=None, seed=None, patients=None):
    """Read a config file; relative paths resolve against its directory."""
    cfg = PipelineConfig()
    base = Path.cwd()
    if path is not None:
        path = Path(path)
        parser = configparser.ConfigParser()
        try:
            with open(path) as f:
                parser.read_file(f)
        except (OSError, configparser.Error) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        base = path.resolve().parent
        for section in parser.sections():
            if section == "run":
                for key, text in parser.items(section):
                    if key == "seed":
                        cfg.seed = int(text)
                    elif key == "patients":
                        cfg.patients = [p.strip() for p in text.split(",") if p.strip()]
                    else:
                        raise ConfigError(f"unknown key {key!r} in [run]")
                continue
            if section not in SECTIONS:
                raise ConfigError(f"unknown section [{section}]")
            target = getattr(cfg, section)
            for key, text in parser.items(section):
                setattr(target, key, _coerce(SECTIONS[section], key, text, base))
    for f in fields(Paths):
        p = getattr(cfg.paths, f.name)
        if p is not None and not p.is_absolute():
            setattr(cfg.paths, f.name, base / p)
    if seed is not None:
        cfg.seed = seed
    if patients is not None:
        cfg.patients = patients
    return cfg.validate()
