"""Pipeline configuration: key=value files plus command-line overrides."""

from dataclasses import dataclass
from pathlib import Path

from .descriptor import DescriptorParams
from .errors import ConfigError
from .spatial import CameraIntrinsics, LKSettings
from .temporal import SyncConfig
from .transfer import RefineSettings

_FEATURE_SPACES = ("invariant", "gray")


def read_key_values(path):
    """Parse a key=value file; # starts a comment, blank lines are skipped.

    Unknown keys are kept, so a generated scene.cfg can double as the
    alignment config.
    """
    out = {}
    text = Path(path).read_text()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value")
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise ConfigError(f"{path}:{lineno}: empty key")
        out[key] = value.strip()
    return out


def _get(raw, key, cast, default):
    if key not in raw or raw[key] == "":
        return default
    try:
        return cast(raw[key])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"config key {key!r}: {exc}") from exc


@dataclass
class PipelineConfig:
    """Everything the alignment pipeline needs beyond the frame files."""

    theta: float
    focal_px: float
    cx: float | None = None
    cy: float | None = None
    lag: int = 5
    window: int = 10
    beta: float = 1.0
    band: int | None = 30
    smooth_sigma: float = 2.0
    downsample_factor: int = 16
    gradient_floor_ratio: float = 0.05
    max_shift: int = 2
    mu_y: float = 1.0
    sigma_y: float = 0.5
    pyramid_levels: int = 3
    max_iterations: int = 50
    robust_skip: int = 2
    min_blob_px: int = 25
    histogram_bins: int = 256
    feature_space: str = "invariant"
    diff_space: str = "invariant"

    def __post_init__(self):
        if self.feature_space not in _FEATURE_SPACES:
            raise ConfigError(f"feature_space must be one of {_FEATURE_SPACES}")
        if self.diff_space not in _FEATURE_SPACES:
            raise ConfigError(f"diff_space must be one of {_FEATURE_SPACES}")
        if self.focal_px <= 0:
            raise ConfigError("focal_px must be positive")
        if self.lag < 0:
            raise ConfigError("lag must be non-negative")
        if self.window < max(self.lag, 1):
            raise ConfigError("window must be at least max(lag, 1)")
        if self.band is not None and self.band < 1:
            raise ConfigError("band must be at least 1 frame")

    @classmethod
    def load(cls, config_path=None, overrides=None):
        """Build a config from an optional file plus override mapping.

        Overrides use the same keys as the file and win over it. theta
        and focal_px must come from one of the two sources.
        """
        raw = read_key_values(config_path) if config_path else {}
        if overrides:
            raw.update({k: v for k, v in overrides.items() if v is not None})
        if "theta" not in raw:
            raise ConfigError("missing required key: theta")
        if "focal_px" not in raw:
            raise ConfigError("missing required key: focal_px")

        def intish(v):
            return int(str(v), 10)

        band_raw = raw.get("band", 30)
        band = None if str(band_raw).lower() in ("none", "off") else intish(band_raw)
        return cls(
            theta=_get(raw, "theta", float, None),
            focal_px=_get(raw, "focal_px", float, None),
            cx=_get(raw, "cx", float, None),
            cy=_get(raw, "cy", float, None),
            lag=_get(raw, "lag", intish, 5),
            window=_get(raw, "window", intish, 10),
            beta=_get(raw, "beta", float, 1.0),
            band=band,
            smooth_sigma=_get(raw, "smooth_sigma", float, 2.0),
            downsample_factor=_get(raw, "downsample_factor", intish, 16),
            gradient_floor_ratio=_get(raw, "gradient_floor_ratio", float, 0.05),
            max_shift=_get(raw, "max_shift", intish, 2),
            mu_y=_get(raw, "mu_y", float, 1.0),
            sigma_y=_get(raw, "sigma_y", float, 0.5),
            pyramid_levels=_get(raw, "pyramid_levels", intish, 3),
            max_iterations=_get(raw, "max_iterations", intish, 50),
            robust_skip=_get(raw, "robust_skip", intish, 2),
            min_blob_px=_get(raw, "min_blob_px", intish, 25),
            histogram_bins=_get(raw, "histogram_bins", intish, 256),
            feature_space=_get(raw, "feature_space", str, "invariant"),
            diff_space=_get(raw, "diff_space", str, "invariant"),
        )

    def descriptor_params(self):
        return DescriptorParams(
            smooth_sigma=self.smooth_sigma,
            downsample_factor=self.downsample_factor,
            gradient_floor_ratio=self.gradient_floor_ratio,
            max_shift=self.max_shift,
            mu_y=self.mu_y,
            sigma_y=self.sigma_y,
        )

    def sync_config(self, label_count):
        return SyncConfig(
            label_count_nr=label_count,
            lag_l=self.lag,
            window_L=self.window,
            beta=self.beta,
            candidate_band=self.band,
        )

    def lk_settings(self):
        return LKSettings(
            pyramid_levels=self.pyramid_levels,
            max_iterations=self.max_iterations,
            robust_skip=self.robust_skip,
        )

    def refine_settings(self):
        return RefineSettings(
            min_blob_px=self.min_blob_px,
            histogram_bins=self.histogram_bins,
        )

    def intrinsics(self, width, height):
        cx = self.cx if self.cx is not None else (width - 1) / 2.0
        cy = self.cy if self.cy is not None else (height - 1) / 2.0
        return CameraIntrinsics(focal_px=self.focal_px, cx=cx, cy=cy)
