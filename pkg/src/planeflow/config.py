"""Run configuration: every tunable in one flat, diffable key-value space.

A run is fully specified by a RunConfig; the resolved config is written into
the output directory as the run manifest so any result can be reproduced
bit-for-bit from its manifest and the same inputs.
"""

from dataclasses import asdict, dataclass, fields

from .homography import RansacConfig
from .multiscale import PyramidConfig
from .occlusion import DEFAULT_DELTA_MULTI, DEFAULT_TAU_AGREE, DEFAULT_THETA_OCC
from .patchmatch import PatchMatchConfig


@dataclass
class RunConfig:
    # preprocessing
    hsv_equalize: bool = False
    # initial correspondence search
    patch_radius: int = 3
    pm_iterations: int = 5
    search_decay: float = 0.5
    # window schedule
    levels: int = 2
    w_max: int = 40
    dw: int = 20
    beta: float = 0.005
    # photometric validation and occlusion cues
    epsilon: float = 0.04
    eta: float = 0.5
    tau_agree: float = DEFAULT_TAU_AGREE
    delta_m: float = DEFAULT_DELTA_MULTI
    theta_occ: float = DEFAULT_THETA_OCC
    # consensus fitting
    ransac_max_iterations: int = 500
    ransac_inlier_px: float = 1.5
    ransac_min_inliers: int = 12
    ransac_confidence: float = 0.995
    ransac_degeneracy_area: float = 1e-6
    # residual detection and inter-level propagation
    residual_min: int = 64
    stage2_passes: int = 3
    max_pairs: int = 2000
    reliability_fraction: float = 0.5
    # densification
    interp_k: int = 25
    interp_lambda: float = 100.0
    interp_sigma: float = 20.0
    # per-level overrides, "level:value" pairs, e.g. "2:0.02,3:0.05"
    level_epsilon: str = ""
    level_eta: str = ""
    # execution
    seed: int = 0
    jobs: int = 1

    def pm_config(self, rng_seed=0):
        return PatchMatchConfig(self.patch_radius, self.pm_iterations,
                                self.search_decay, rng_seed)

    def ransac_config(self):
        return RansacConfig(self.ransac_max_iterations, self.ransac_inlier_px,
                            self.ransac_min_inliers, self.ransac_confidence,
                            degeneracy_rel_area=self.ransac_degeneracy_area)

    def _level_overrides(self):
        overrides = {}
        for field_name, key in (("level_epsilon", "epsilon"),
                                ("level_eta", "eta")):
            spec = getattr(self, field_name).strip()
            if not spec:
                continue
            for part in spec.split(","):
                level, _, value = part.partition(":")
                overrides.setdefault(int(level), {})[key] = float(value)
        return overrides

    def pyramid_config(self):
        return PyramidConfig(
            levels=self.levels, w_max=self.w_max, dw=self.dw, beta=self.beta,
            epsilon=self.epsilon, eta=self.eta, tau_agree=self.tau_agree,
            delta_m=self.delta_m, residual_min=self.residual_min,
            stage2_passes=self.stage2_passes, max_pairs=self.max_pairs,
            reliability_fraction=self.reliability_fraction,
            ransac=self.ransac_config(), rng_seed=self.seed,
            level_overrides=self._level_overrides())


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _parse_value(name, text):
    kind = _FIELD_TYPES[name]
    text = text.strip()
    if kind in (bool, "bool"):
        if text.lower() in ("1", "true", "yes", "on"):
            return True
        if text.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"bad boolean for {name}: {text!r}")
    if kind in (int, "int"):
        return int(text)
    if kind in (float, "float"):
        return float(text)
    return text


def parse_config_file(path):
    """Flat ``key = value`` file with # comments; unknown keys are errors."""
    values = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key = value")
            key, _, val = line.partition("=")
            key = key.strip()
            if key not in _FIELD_TYPES:
                raise ValueError(f"{path}:{lineno}: unknown setting {key!r}")
            values[key] = _parse_value(key, val)
    return values


def apply_overrides(cfg, pairs):
    """Apply ``key=value`` strings (CLI overrides) onto a RunConfig."""
    for pair in pairs:
        if "=" not in pair:
            raise ValueError(f"override must be key=value, got {pair!r}")
        key, _, val = pair.partition("=")
        key = key.strip()
        if key not in _FIELD_TYPES:
            raise ValueError(f"unknown setting {key!r}")
        setattr(cfg, key, _parse_value(key, val))
    return cfg


def build_config(config_path=None, overrides=()):
    cfg = RunConfig()
    if config_path:
        for key, val in parse_config_file(config_path).items():
            setattr(cfg, key, val)
    apply_overrides(cfg, overrides)
    return cfg


def manifest_text(cfg):
    """The fully resolved configuration, one sorted key per line."""
    items = sorted(asdict(cfg).items())
    return "".join(f"{k} = {v}\n" for k, v in items)
