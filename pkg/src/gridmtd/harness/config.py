"""Scenario configuration: one TOML/JSON file drives every workflow.

The file is split into sections — ``[scenario]`` for the shared knobs,
``[profile]``, ``[campaign]``, ``[training]``, ``[identify]``, ``[mtd]``
and ``[paths]`` for the component-specific ones.  Every section is
optional; defaults reproduce the desk-scale case-14 study.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib  # py311+
except ModuleNotFoundError:  # pragma: no cover - py310 fallback
    import tomli as tomllib

from ..detector import TrainingConfig
from ..identifier import IdentifyConfig
from ..mtd import MtdConfig

__all__ = [
    "ConfigError",
    "ProfileConfig",
    "CampaignConfig",
    "ScenarioConfig",
    "load_config",
    "load_scenario",
    "scenario_from_dict",
]

BUNDLED_CASES = ("case14", "two_bus", "three_bus")

# conventional artifact names under the --out directory
DEFAULT_PATHS = {
    "dataset": "dataset.npz",
    "model": "model.json",
    "episodes": "episodes.jsonl",
    "metrics": "metrics.csv",
    "roc": "roc.csv",
    "identification": "identification.json",
    "mtd": "mtd.json",
    "detections": "detections.csv",
    "history": "history.csv",
    "calibration": "calibration.json",
    "report": "report.md",
}


class ConfigError(ValueError):
    """Bad configuration file: missing file, unknown key, out-of-range value."""


@dataclass(frozen=True)
class ProfileConfig:
    """Load-profile source: a CSV of multipliers, or synthesis parameters.

    The synthetic profile is a daily sinusoid with a slower weekly
    modulation and Gaussian jitter, clipped away from zero so power flow
    stays solvable.
    """

    path: str | None = None
    n_steps: int = 400
    day_period: int = 288       # steps per day at 5-minute resolution
    day_amplitude: float = 0.15
    week_amplitude: float = 0.05
    jitter: float = 0.02
    floor: float = 0.2


@dataclass(frozen=True)
class CampaignConfig:
    """Which steps of the evaluation stream get attacked, and how hard."""

    fraction: float = 0.25
    k_min: int = 1
    k_max: int = 3
    band: tuple = (0.1, 0.3)
    block: bool = False         # contiguous tail block instead of random steps


@dataclass(frozen=True)
class ScenarioConfig:
    case: str = "case14"
    noise_scale: float = 0.02
    window: int = 5
    split: tuple = (0.6, 0.2, 0.2)
    seed: int = 0
    alpha: float = 0.02         # BDD false-alarm budget
    rho: float = 0.98           # target post-move detection probability
    radius: float = 0.01        # uncertainty-ball radius around the identified attack
    target_fpr: float = 0.08    # detector calibration point on validation data
    noise_draws: int = 200      # noise resamples per trigger for rate estimates
    profile: ProfileConfig = field(default_factory=ProfileConfig)
    campaign: CampaignConfig = field(default_factory=CampaignConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    identify: IdentifyConfig = field(default_factory=IdentifyConfig)
    mtd: MtdConfig = field(default_factory=MtdConfig)
    paths: dict = field(default_factory=dict)

    def artifact(self, out_dir, key: str) -> Path:
        """Artifact location: [paths] override (absolute kept, relative under
        ``out_dir``) or the conventional name under ``out_dir``."""
        if key not in DEFAULT_PATHS:
            raise KeyError(f"unknown artifact key {key!r}")
        raw = Path(self.paths.get(key, DEFAULT_PATHS[key]))
        return raw if raw.is_absolute() else Path(out_dir) / raw

    def case_path(self, base_dir=None) -> str | None:
        """Filesystem path of the case, or None for a bundled one."""
        if self.case in BUNDLED_CASES:
            return None
        p = Path(self.case)
        if not p.is_absolute() and base_dir is not None:
            p = Path(base_dir) / p
        return str(p)


def _build(cls, section: dict, name: str, defaults: dict | None = None):
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(section) - known)
    if unknown:
        raise ConfigError(f"unknown key(s) in [{name}]: {', '.join(unknown)}")
    kw = dict(defaults or {})
    kw.update(section)
    # TOML arrays come back as lists; tuple-typed fields want tuples
    for key in ("split", "band", "solver_order"):
        if key in kw and isinstance(kw[key], list):
            kw[key] = tuple(kw[key])
    try:
        return cls(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid [{name}] section: {exc}") from exc


def _validate(cfg: ScenarioConfig, base_dir) -> None:
    sc = cfg
    if sc.noise_scale < 0:
        raise ConfigError(f"noise_scale must be nonnegative, got {sc.noise_scale}")
    if sc.window < 2:
        raise ConfigError(f"window must be at least 2, got {sc.window}")
    if len(sc.split) != 3 or any(s <= 0 for s in sc.split) \
            or abs(sum(sc.split) - 1.0) > 1e-6:
        raise ConfigError(f"split must be three positive fractions summing to 1, got {sc.split}")
    if not isinstance(sc.seed, int) or sc.seed < 0:
        raise ConfigError(f"seed must be a nonnegative integer, got {sc.seed!r}")
    for nm, v in (("alpha", sc.alpha), ("rho", sc.rho), ("target_fpr", sc.target_fpr)):
        if not 0.0 < v < 1.0:
            raise ConfigError(f"{nm} must be in (0, 1), got {v}")
    if sc.radius <= 0:
        raise ConfigError(f"radius must be positive, got {sc.radius}")
    if sc.noise_draws < 1:
        raise ConfigError(f"noise_draws must be at least 1, got {sc.noise_draws}")

    p = sc.profile
    if p.path is not None:
        prof = Path(p.path)
        if not prof.is_absolute() and base_dir is not None:
            prof = Path(base_dir) / prof
        if not prof.exists():
            raise ConfigError(f"load profile not found: {prof}")
    if p.n_steps < 3 * sc.window:
        raise ConfigError(
            f"profile.n_steps = {p.n_steps} too short for window {sc.window}")
    if p.day_period < 2:
        raise ConfigError(f"profile.day_period must be at least 2, got {p.day_period}")
    for nm in ("day_amplitude", "week_amplitude", "jitter"):
        v = getattr(p, nm)
        if v < 0:
            raise ConfigError(f"profile.{nm} must be nonnegative, got {v}")
    if not 0.0 < p.floor < 1.0:
        raise ConfigError(f"profile.floor must be in (0, 1), got {p.floor}")

    c = sc.campaign
    if not 0.0 <= c.fraction <= 1.0:
        raise ConfigError(f"campaign.fraction must be in [0, 1], got {c.fraction}")
    if not (1 <= c.k_min <= c.k_max):
        raise ConfigError(f"campaign needs 1 <= k_min <= k_max, got {c.k_min}..{c.k_max}")
    if len(c.band) != 2 or not (0.0 <= c.band[0] <= c.band[1]):
        raise ConfigError(f"campaign.band must be (lo, hi) with 0 <= lo <= hi, got {c.band}")

    case_file = sc.case_path(base_dir)
    if case_file is not None and not Path(case_file).exists():
        raise ConfigError(f"case file not found: {case_file}")

    extra = sorted(set(sc.paths) - set(DEFAULT_PATHS))
    if extra:
        raise ConfigError(f"unknown key(s) in [paths]: {', '.join(extra)}")


def scenario_from_dict(doc: dict, base_dir=None) -> ScenarioConfig:
    """Build and validate a ScenarioConfig from a parsed config document."""
    if not isinstance(doc, dict):
        raise ConfigError(f"config root must be a table, got {type(doc).__name__}")
    sections = {"scenario", "profile", "campaign", "training", "identify", "mtd", "paths"}
    unknown = sorted(set(doc) - sections)
    if unknown:
        raise ConfigError(f"unknown section(s): {', '.join(unknown)}")
    for name in sections:
        if name in doc and not isinstance(doc[name], dict):
            raise ConfigError(f"[{name}] must be a table")

    scalar = doc.get("scenario", {})
    profile = _build(ProfileConfig, doc.get("profile", {}), "profile")
    campaign = _build(CampaignConfig, doc.get("campaign", {}), "campaign")
    seed = scalar.get("seed", 0)
    training = _build(TrainingConfig, doc.get("training", {}), "training",
                      defaults={"seed": seed})
    identify = _build(IdentifyConfig, doc.get("identify", {}), "identify",
                      defaults={"rho": scalar.get("radius", 0.01)})
    mtd = _build(MtdConfig, doc.get("mtd", {}), "mtd", defaults={"seed": seed})
    paths = dict(doc.get("paths", {}))

    cfg = _build(ScenarioConfig, scalar, "scenario")
    cfg = dataclasses.replace(cfg, profile=profile, campaign=campaign,
                              training=training, identify=identify,
                              mtd=mtd, paths=paths)
    _validate(cfg, base_dir)
    return cfg


def load_config(path) -> dict:
    """Parse a TOML or JSON config file into a plain dict."""
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    try:
        if p.suffix.lower() == ".json":
            return json.loads(p.read_text())
        with open(p, "rb") as fh:
            return tomllib.load(fh)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot parse {p}: {exc}") from exc


def load_scenario(path, seed: int | None = None) -> ScenarioConfig:
    """Load + validate a scenario config; ``seed`` overrides the file's."""
    p = Path(path)
    doc = load_config(p)
    if seed is not None:
        # training/mtd seeds follow unless their sections pin one explicitly
        doc = dict(doc)
        doc["scenario"] = dict(doc.get("scenario", {}), seed=seed)
    return scenario_from_dict(doc, base_dir=p.parent)
