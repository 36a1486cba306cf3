"""Scenario configuration (TOML).

Schema (units in brackets; ``?`` marks optional keys)::

    name = "street"            ?
    master_seed = 7            # integer
    bandwidth = 20e6           # [Hz] N_s = floor(bandwidth / scs)
    noise_figure = 7.0         # [dB]; -inf gives a noiseless run
    target_rcs = 7.0           # [dBsm]
    step_stride = 1            ? evaluate every k-th trajectory step

    [ofdm]
    carrier_freq = 3.5e9       # [Hz]
    scs = 30e3                 # [Hz]
    num_symbols = 500
    cp_duration = 2.38e-6      ? [s], default T_s / 14

    [periodogram]              ? all keys optional
    range_padding = 4          # N' = range_padding * N_s
    doppler_padding = 2        # M' = doppler_padding * M
    threshold_db = 13.0        # [dB] above the map median
    window_bins = 5            # Gaussian fit half-width [range bins]

    [trajectory]
    start = [x, y, z]          # [m]
    direction = [dx, dy, dz]   # unit vector
    speed = 13.89              # [m/s]
    step_interval = 0.02       # [s]
    num_steps = 100

    [fusion]
    algorithms = ["ml", "map", "nlls"]
    search_min = [x, y, z]     # [m]
    search_max = [x, y, z]     # [m]
    fixed_z = 1.0              ? [m]
    epsilon = 1e-3             ? [m]
    grid_starts_per_axis = 20  ?
    num_refine_starts = 5      ?
    max_iterations = 500       ?
    convergence_tol = 1e-6     ? [m]

    [[bs]]                     # one table per BS
    id = 1
    position = [x, y, z]       # [m]
    tx_power = 23.0            ? [dBm]
    antenna_gain = 0.0         ? [dBi]

    [[scatterer]]              ? one table per scatterer
    position = [x, y, z]       # [m]
    reflection_loss = 10.0     # [dB]
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

from mmsense.echo import OfdmParams
from mmsense.errors import ConfigError
from mmsense.fusion import Algorithm, FusionConfig
from mmsense.periodogram import PeriodogramConfig
from mmsense.scene import BsConfig, Scatterer, Trajectory

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


@dataclass(frozen=True)
class ScenarioConfig:
    bandwidth: float
    carrier_freq: float
    scs: float
    num_symbols: int
    bss: tuple[BsConfig, ...]
    trajectory: Trajectory
    fusion: tuple[FusionConfig, ...]
    scatterers: tuple[Scatterer, ...] = ()
    cp_duration: float | None = None
    target_rcs: float = 7.0
    noise_figure: float = 7.0
    master_seed: int = 0
    periodogram: PeriodogramConfig = PeriodogramConfig()
    step_stride: int = 1
    name: str = "scenario"

    def __post_init__(self):
        if self.bandwidth < self.scs:
            raise ConfigError(f"bandwidth {self.bandwidth} Hz is below the subcarrier spacing {self.scs} Hz")
        ids = [bs.id for bs in self.bss]
        if len(set(ids)) != len(ids):
            raise ConfigError(f"duplicate BS ids {ids}")
        if not self.bss:
            raise ConfigError("scenario needs at least one BS")
        if self.step_stride < 1:
            raise ConfigError("step_stride must be >= 1")

    @property
    def ofdm(self) -> OfdmParams:
        return OfdmParams.from_bandwidth(self.bandwidth, self.scs, self.num_symbols, self.carrier_freq, self.cp_duration)

    @property
    def algorithms(self) -> tuple[Algorithm, ...]:
        return tuple(f.algorithm for f in self.fusion)

    @property
    def steps(self) -> range:
        return range(0, self.trajectory.num_steps, self.step_stride)

    def with_bandwidth(self, bandwidth: float) -> ScenarioConfig:
        return replace(self, bandwidth=float(bandwidth))

    def with_bss(self, ids) -> ScenarioConfig:
        wanted = set(ids)
        return replace(self, bss=tuple(bs for bs in self.bss if bs.id in wanted))

    def with_algorithms(self, algorithms) -> ScenarioConfig:
        base = self.fusion[0]
        return replace(self, fusion=tuple(base.with_algorithm(a) for a in algorithms))


def _require(table: dict, key: str, where: str):
    try:
        return table[key]
    except KeyError:
        raise ConfigError(f"missing key '{key}' in {where}") from None


def parse_config(raw: dict) -> ScenarioConfig:
    try:
        ofdm = _require(raw, "ofdm", "top level")
        traj = _require(raw, "trajectory", "top level")
        fus = _require(raw, "fusion", "top level")
        trajectory = Trajectory(
            start=_require(traj, "start", "[trajectory]"),
            direction=_require(traj, "direction", "[trajectory]"),
            speed=float(_require(traj, "speed", "[trajectory]")),
            step_interval=float(_require(traj, "step_interval", "[trajectory]")),
            num_steps=int(_require(traj, "num_steps", "[trajectory]")),
        )
        base = FusionConfig(
            search_min=_require(fus, "search_min", "[fusion]"),
            search_max=_require(fus, "search_max", "[fusion]"),
            fixed_z=fus.get("fixed_z"),
            epsilon=float(fus.get("epsilon", 1e-3)),
            grid_starts_per_axis=int(fus.get("grid_starts_per_axis", 20)),
            num_refine_starts=int(fus.get("num_refine_starts", 5)),
            max_iterations=int(fus.get("max_iterations", 500)),
            convergence_tol=float(fus.get("convergence_tol", 1e-6)),
        )
        algorithms = fus.get("algorithms", ["ml", "map", "nlls"])
        fusion = tuple(base.with_algorithm(a.lower()) for a in algorithms)
        bss = tuple(
            BsConfig(
                id=int(_require(b, "id", "[[bs]]")),
                position=_require(b, "position", "[[bs]]"),
                tx_power=float(b.get("tx_power", 23.0)),
                antenna_gain=float(b.get("antenna_gain", 0.0)),
            )
            for b in _require(raw, "bs", "top level")
        )
        scatterers = tuple(
            Scatterer(position=_require(s, "position", "[[scatterer]]"), reflection_loss=float(s.get("reflection_loss", 0.0)))
            for s in raw.get("scatterer", [])
        )
        per = raw.get("periodogram", {})
        periodogram = PeriodogramConfig(
            range_padding=int(per.get("range_padding", 4)),
            doppler_padding=int(per.get("doppler_padding", 2)),
            threshold_db=float(per.get("threshold_db", 13.0)),
            window_bins=int(per.get("window_bins", 5)),
        )
        return ScenarioConfig(
            name=str(raw.get("name", "scenario")),
            bandwidth=float(_require(raw, "bandwidth", "top level")),
            carrier_freq=float(_require(ofdm, "carrier_freq", "[ofdm]")),
            scs=float(_require(ofdm, "scs", "[ofdm]")),
            num_symbols=int(_require(ofdm, "num_symbols", "[ofdm]")),
            cp_duration=ofdm.get("cp_duration"),
            bss=bss,
            scatterers=scatterers,
            trajectory=trajectory,
            fusion=fusion,
            target_rcs=float(raw.get("target_rcs", 7.0)),
            noise_figure=float(_require(raw, "noise_figure", "top level")),
            master_seed=int(_require(raw, "master_seed", "top level")),
            periodogram=periodogram,
            step_stride=int(raw.get("step_stride", 1)),
        )
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path) -> ScenarioConfig:
    path = Path(path)
    try:
        with path.open("rb") as fh:
            raw = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return parse_config(raw)


def bundled_config_path(name: str) -> Path:
    """Path of a scenario shipped with the package, e.g. ``"street"``."""
    ref = resources.files("mmsense") / "scenarios" / f"{name}.toml"
    if not ref.is_file():
        raise ConfigError(f"no bundled scenario named '{name}'")
    return Path(str(ref))


def load_bundled(name: str) -> ScenarioConfig:
    return load_config(bundled_config_path(name))
