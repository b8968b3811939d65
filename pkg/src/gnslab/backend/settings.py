"""Run configuration: named profiles and the JSON config file."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, is_dataclass, replace
from pathlib import Path
from typing import Any

from .._errors import ConfigError
from .flip import SimConfig
from .gns import GnsConfig
from .nn import LrSchedule
from .scenes import SceneSpec
from .training import NoiseConfig, TrainConfig, TrainVariant

PROFILE_DESK = "desk"
PROFILE_PAPER = "paper"
SECTIONS = ("scene", "sim", "dataset", "model", "train", "noise", "eval")


@dataclass(frozen=True)
class DatasetSettings:
    """How many trajectories each split gets and how they are seeded.

    Validation and test splits reuse the training distribution with their
    seed shifted by the given offsets.
    """

    n_train: int = 20
    n_validation: int = 2
    n_test: int = 2
    validation_seed_offset: int = 1
    test_seed_offset: int = 2
    wall_spacing: float = 1.0

    def __post_init__(self) -> None:
        if min(self.n_train, self.n_validation, self.n_test) < 0:
            raise ConfigError("trajectory counts must be non-negative")
        if self.wall_spacing <= 0.0:
            raise ConfigError(f"wall_spacing must be positive: {self.wall_spacing}")


@dataclass(frozen=True)
class EvalSettings:
    """Evaluation and rendering knobs."""

    emd_every: int = 10
    frame_stride: int = 1
    render_every: int = 20
    render: bool = True

    def __post_init__(self) -> None:
        if self.emd_every < 1 or self.frame_stride < 1 or self.render_every < 1:
            raise ConfigError("emd_every, frame_stride and render_every must be positive")


@dataclass(frozen=True)
class RunConfig:
    """Everything a subcommand needs besides its input and output paths.

    Attributes:
        profile: Name of the profile the values started from.
        seed: Base seed of data generation and training.
        jobs: Worker processes for per-trajectory work.
        variant: Training variant.
        scene: Scene distribution and trajectory length.
        sim: Solver constants.
        dataset: Split sizes and seed offsets.
        model: GNS architecture.
        train: Optimization settings, noise included.
        eval: Evaluation settings.
    """

    profile: str = PROFILE_DESK
    seed: int = 0
    jobs: int = 1
    variant: TrainVariant = TrainVariant.ONE_STEP
    scene: SceneSpec = field(default_factory=SceneSpec)
    sim: SimConfig = field(default_factory=SimConfig)
    dataset: DatasetSettings = field(default_factory=DatasetSettings)
    model: GnsConfig = field(default_factory=GnsConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalSettings = field(default_factory=EvalSettings)

    def __post_init__(self) -> None:
        if self.jobs < 1:
            raise ConfigError(f"jobs must be at least 1: {self.jobs}")

    def model_config(self) -> GnsConfig:
        """The architecture with the boundary features the variant needs."""
        return self.variant.model_config(self.model)

    def train_config(self) -> TrainConfig:
        """Training settings carrying the run seed."""
        return replace(self.train, seed=self.seed)


def _desk() -> RunConfig:
    return RunConfig(
        profile=PROFILE_DESK,
        scene=SceneSpec(steps=100),
        dataset=DatasetSettings(n_train=20, n_validation=2, n_test=2),
        model=GnsConfig(latent_size=32, hidden_size=32, message_passing_steps=3),
        train=TrainConfig(batch_size=2, total_steps=10_000, checkpoint_interval=1_000),
    )


def _paper() -> RunConfig:
    return RunConfig(
        profile=PROFILE_PAPER,
        scene=SceneSpec(steps=400),
        dataset=DatasetSettings(n_train=2000, n_validation=20, n_test=0),
        model=GnsConfig(latent_size=128, hidden_size=128, message_passing_steps=10),
        train=TrainConfig(
            batch_size=2,
            total_steps=1_000_000,
            checkpoint_interval=10_000,
            schedule=LrSchedule(lr_start=1e-4, lr_floor=1e-6, decay_steps=100_000),
        ),
    )


PROFILES = {PROFILE_DESK: _desk, PROFILE_PAPER: _paper}


def profile_config(name: str) -> RunConfig:
    """The named profile's configuration."""
    try:
        return PROFILES[name]()
    except KeyError:
        raise ConfigError(f"unknown profile {name!r}, expected one of {sorted(PROFILES)}") from None


def _plain(value: Any) -> Any:
    if isinstance(value, tuple):
        return [_plain(v) for v in value]
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, TrainVariant):
        return value.value
    return value


def _section_dict(obj: Any) -> dict[str, Any]:
    return {k: _plain(v) for k, v in asdict(obj).items()}


def config_to_dict(config: RunConfig) -> dict[str, Any]:
    """JSON-ready snapshot with one key per section."""
    train = _section_dict(config.train)
    train.pop("noise")
    train.pop("seed")
    return {
        "profile": config.profile,
        "seed": config.seed,
        "jobs": config.jobs,
        "variant": config.variant.value,
        "scene": config.scene.to_dict(),
        "sim": _section_dict(config.sim),
        "dataset": _section_dict(config.dataset),
        "model": config.model.to_dict(),
        "train": train,
        "noise": _section_dict(config.train.noise),
        "eval": _section_dict(config.eval),
    }


def _merge(base: Any, section: str, values: Any) -> Any:
    """``base`` with the keys of ``values`` replaced, rejecting unknown keys."""
    if not isinstance(values, dict):
        raise ConfigError(f"section {section!r} must be an object")
    known = {f.name for f in fields(base)}
    unknown = set(values) - known
    if unknown:
        raise ConfigError(f"unknown keys in section {section!r}: {sorted(unknown)}")

    updates: dict[str, Any] = {}
    for key, value in values.items():
        current = getattr(base, key)
        if is_dataclass(current):
            updates[key] = _merge(current, f"{section}.{key}", value)
        elif isinstance(current, tuple) and isinstance(value, list):
            updates[key] = tuple(value)
        else:
            updates[key] = value
    try:
        return replace(base, **updates)
    except TypeError as e:
        raise ConfigError(f"invalid values in section {section!r}: {e}") from e


def _parse_variant(value: Any) -> TrainVariant:
    try:
        return TrainVariant(value)
    except ValueError:
        options = ", ".join(v.value for v in TrainVariant)
        raise ConfigError(f"unknown variant {value!r}, expected one of {options}") from None


def apply_config(base: RunConfig, data: dict[str, Any]) -> RunConfig:
    """Overlay a parsed config document on ``base``."""
    top = {"profile", "seed", "jobs", "variant", *SECTIONS}
    unknown = set(data) - top
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")

    config = base
    if "noise" in data:
        noise = _merge(config.train.noise, "noise", data["noise"])
        config = replace(config, train=replace(config.train, noise=noise))
    for section in ("scene", "sim", "dataset", "model", "train", "eval"):
        if section in data:
            config = replace(
                config, **{section: _merge(getattr(config, section), section, data[section])}
            )

    scalars: dict[str, Any] = {}
    for key in ("seed", "jobs"):
        if key in data:
            scalars[key] = int(data[key])
    if "variant" in data:
        scalars["variant"] = _parse_variant(data["variant"])
    if "profile" in data:
        scalars["profile"] = str(data["profile"])
    return replace(config, **scalars)


def load_run_config(path: str | Path, base: RunConfig | None = None) -> RunConfig:
    """Read a JSON run config on top of its profile (or ``base``).

    The file's ``profile`` key picks the starting profile unless ``base`` is
    given.

    Raises:
        ConfigError: Unreadable file, malformed JSON or unknown keys.
    """
    path = Path(path)
    try:
        data = json.loads(s=path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"failed to read config {path}: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: config must be a JSON object")

    if base is None:
        base = profile_config(str(data.get("profile", PROFILE_DESK)))
    return apply_config(base, data)


def save_run_config(path: str | Path, config: RunConfig) -> Path:
    """Write the config snapshot as indented JSON."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(
        data=json.dumps(obj=config_to_dict(config), indent=4, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    return path


def resolve_config(
    profile: str | None = None,
    config_path: str | Path | None = None,
    seed: int | None = None,
    jobs: int | None = None,
    variant: str | None = None,
) -> RunConfig:
    """Flags over config file over profile.

    Args:
        profile: Profile name; defaults to the file's profile, then ``desk``.
        config_path: Optional JSON config file.
        seed: Seed override.
        jobs: Worker count override.
        variant: Variant override.
    """
    if config_path is not None:
        base = profile_config(profile) if profile is not None else None
        config = load_run_config(config_path, base=base)
    else:
        config = profile_config(profile or PROFILE_DESK)

    overrides: dict[str, Any] = {}
    if seed is not None:
        overrides["seed"] = seed
    if jobs is not None:
        overrides["jobs"] = jobs
    if variant is not None:
        overrides["variant"] = _parse_variant(variant)
    return replace(config, **overrides) if overrides else config
