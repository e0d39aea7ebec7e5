"""Pipeline configuration: one TOML file drives every CLI stage.

Layout (all keys optional unless noted)::

    seed = 42                 # master seed; named substreams per stage

    [growth]                  # required section
    R = 1.0                   # crown domain radius (required)
    n_attractors = 2000       # attraction points (required)
    delta_l = 0.03            # growth step (required)
    d_kill = 0.09             # consumption radius (required)
    d_influence = 0.3         # attraction radius (required)
    theta = [1.0, 0.0, 0.0, 0.0]
    max_iterations = 400
    stall_limit = 40
    assignment = "closest"    # or "all_in_range"
    uniform_volume = false    # volume-uniform attractor sampling

    [sizing]
    r_e = 0.012
    i_g = 2.0
    ring_segments = 6

    [sampling]
    density = 30000.0         # surface points per unit area

    [gaussians]
    opacity0 = 0.8
    trunk_color = [0.42, 0.30, 0.18]
    extremity_color = [0.28, 0.52, 0.22]

    [render]
    views = 4
    width = 512
    height = 512
    fov_deg = 50.0
    distance_min = 2.5        # in units of the scene radius
    distance_max = 4.0
    depth_format = "pfm"      # or "pgm"

    [fit]
    theta_init = [1.0, 0.0, 0.0, 0.0]
    theta_lo = [0.2, 0.0, -0.5, 0.0]
    theta_hi = [3.0, 2.0, 2.0, 0.0]
    step_sigma = 0.25
    budget = 200
    views = 4
    resolution = 96
"""

from __future__ import annotations

from dataclasses import dataclass, field

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .errors import ParseError, ValidationError
from .fitting import FitConfig
from .gaussians import DEFAULT_EXTREMITY_COLOR, DEFAULT_TRUNK_COLOR
from .model import GrowthParams, SizingParams, validate_params, validate_sizing


@dataclass(frozen=True)
class RenderSettings:
    views: int = 4
    width: int = 512
    height: int = 512
    fov_deg: float = 50.0
    distance_range: tuple[float, float] = (2.5, 4.0)
    depth_format: str = "pfm"

    def validate(self) -> None:
        if self.views < 1:
            raise ValidationError(f"render.views must be >= 1, got {self.views}")
        if self.width < 1 or self.height < 1:
            raise ValidationError("render dimensions must be positive")
        if not 0 < self.fov_deg < 180:
            raise ValidationError(f"render.fov_deg must be in (0, 180), got {self.fov_deg}")
        lo, hi = self.distance_range
        if not 0 < lo <= hi:
            raise ValidationError(f"render distance range must satisfy 0 < min <= max, got {lo}, {hi}")
        if self.depth_format not in ("pfm", "pgm"):
            raise ValidationError(f"render.depth_format must be pfm or pgm, got {self.depth_format!r}")


@dataclass
class PipelineConfig:
    growth: GrowthParams
    sizing: SizingParams = SizingParams(r_e=0.012, i_g=2.0, ring_segments=6)
    density: float = 30000.0
    opacity0: float = 0.8
    trunk_color: tuple[float, float, float] = DEFAULT_TRUNK_COLOR
    extremity_color: tuple[float, float, float] = DEFAULT_EXTREMITY_COLOR
    render: RenderSettings = field(default_factory=RenderSettings)
    fit: FitConfig = FitConfig(
        theta_init=(1.0, 0.0, 0.0, 0.0),
        theta_lo=(0.2, 0.0, -0.5, 0.0),
        theta_hi=(3.0, 2.0, 2.0, 0.0),
    )
    fit_resolution: int = 96
    uniform_volume: bool = False
    seed: int = 0

    def validate(self) -> None:
        validate_params(self.growth)
        validate_sizing(self.sizing)
        if not self.density > 0:
            raise ValidationError(f"sampling.density must be positive, got {self.density}")
        if not 0 < self.opacity0 <= 1:
            raise ValidationError(f"gaussians.opacity0 must be in (0, 1], got {self.opacity0}")
        for name, c in (("trunk_color", self.trunk_color), ("extremity_color", self.extremity_color)):
            if len(c) != 3 or not all(0.0 <= v <= 1.0 for v in c):
                raise ValidationError(f"gaussians.{name} must be 3 values in [0, 1], got {c!r}")
        self.render.validate()
        self.fit.validate()
        if self.fit_resolution < 8:
            raise ValidationError(f"fit.resolution must be >= 8, got {self.fit_resolution}")


def _take(section: dict, table: str, key: str, default=None, required: bool = False):
    if key in section:
        return section.pop(key)
    if required:
        raise ValidationError(f"config is missing required key [{table}] {key}")
    return default


def _reject_unknown(section: dict, table: str) -> None:
    if section:
        raise ValidationError(f"unknown config key(s) in [{table}]: {', '.join(sorted(section))}")


def _triple(value, what: str) -> tuple[float, float, float]:
    if not isinstance(value, (list, tuple)) or len(value) != 3:
        raise ValidationError(f"{what} must be a 3-element array")
    return tuple(float(v) for v in value)


def _quad(value, what: str) -> tuple[float, float, float, float]:
    if not isinstance(value, (list, tuple)) or len(value) != 4:
        raise ValidationError(f"{what} must be a 4-element array")
    return tuple(float(v) for v in value)


def load_config(path) -> PipelineConfig:
    """Parse and validate a pipeline TOML file."""
    with open(path, "rb") as fh:
        try:
            doc = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ParseError(f"{path}: invalid TOML: {exc}") from exc

    seed = int(doc.pop("seed", 0))
    g = doc.pop("growth", None)
    if not isinstance(g, dict):
        raise ValidationError("config requires a [growth] section")
    growth = GrowthParams(
        R=float(_take(g, "growth", "R", required=True)),
        n_attractors=int(_take(g, "growth", "n_attractors", required=True)),
        delta_l=float(_take(g, "growth", "delta_l", required=True)),
        d_kill=float(_take(g, "growth", "d_kill", required=True)),
        d_influence=float(_take(g, "growth", "d_influence", required=True)),
        theta=_quad(_take(g, "growth", "theta", [1.0, 0.0, 0.0, 0.0]), "growth.theta"),
        max_iterations=int(_take(g, "growth", "max_iterations", 400)),
        stall_limit=int(_take(g, "growth", "stall_limit", 40)),
        seed=seed,
        assignment=str(_take(g, "growth", "assignment", "closest")),
    )
    uniform_volume = bool(_take(g, "growth", "uniform_volume", False))
    _reject_unknown(g, "growth")

    s = doc.pop("sizing", {})
    sizing = SizingParams(
        r_e=float(_take(s, "sizing", "r_e", 0.012)),
        i_g=float(_take(s, "sizing", "i_g", 2.0)),
        ring_segments=int(_take(s, "sizing", "ring_segments", 6)),
    )
    _reject_unknown(s, "sizing")

    sa = doc.pop("sampling", {})
    density = float(_take(sa, "sampling", "density", 30000.0))
    _reject_unknown(sa, "sampling")

    ga = doc.pop("gaussians", {})
    opacity0 = float(_take(ga, "gaussians", "opacity0", 0.8))
    trunk_color = _triple(_take(ga, "gaussians", "trunk_color", list(DEFAULT_TRUNK_COLOR)),
                          "gaussians.trunk_color")
    extremity_color = _triple(_take(ga, "gaussians", "extremity_color", list(DEFAULT_EXTREMITY_COLOR)),
                              "gaussians.extremity_color")
    _reject_unknown(ga, "gaussians")

    r = doc.pop("render", {})
    render = RenderSettings(
        views=int(_take(r, "render", "views", 4)),
        width=int(_take(r, "render", "width", 512)),
        height=int(_take(r, "render", "height", 512)),
        fov_deg=float(_take(r, "render", "fov_deg", 50.0)),
        distance_range=(
            float(_take(r, "render", "distance_min", 2.5)),
            float(_take(r, "render", "distance_max", 4.0)),
        ),
        depth_format=str(_take(r, "render", "depth_format", "pfm")),
    )
    _reject_unknown(r, "render")

    f = doc.pop("fit", {})
    fit_cfg = FitConfig(
        theta_init=_quad(_take(f, "fit", "theta_init", list(growth.theta)), "fit.theta_init"),
        theta_lo=_quad(_take(f, "fit", "theta_lo", [0.2, 0.0, -0.5, 0.0]), "fit.theta_lo"),
        theta_hi=_quad(_take(f, "fit", "theta_hi", [3.0, 2.0, 2.0, 0.0]), "fit.theta_hi"),
        step_sigma=float(_take(f, "fit", "step_sigma", 0.25)),
        budget=int(_take(f, "fit", "budget", 200)),
        views=int(_take(f, "fit", "views", 4)),
        seed=seed,
    )
    fit_resolution = int(_take(f, "fit", "resolution", 96))
    _reject_unknown(f, "fit")

    _reject_unknown(doc, "top level")

    cfg = PipelineConfig(
        growth=growth,
        sizing=sizing,
        density=density,
        opacity0=opacity0,
        trunk_color=trunk_color,
        extremity_color=extremity_color,
        render=render,
        fit=fit_cfg,
        fit_resolution=fit_resolution,
        uniform_volume=uniform_volume,
        seed=seed,
    )
    cfg.validate()
    return cfg


def override_seed(cfg: PipelineConfig, seed: int) -> PipelineConfig:
    from dataclasses import replace

    return PipelineConfig(
        growth=replace(cfg.growth, seed=seed),
        sizing=cfg.sizing,
        density=cfg.density,
        opacity0=cfg.opacity0,
        trunk_color=cfg.trunk_color,
        extremity_color=cfg.extremity_color,
        render=cfg.render,
        fit=replace(cfg.fit, seed=seed),
        fit_resolution=cfg.fit_resolution,
        uniform_volume=cfg.uniform_volume,
        seed=seed,
    )
