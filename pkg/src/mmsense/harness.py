"""Trajectory sweep, error metrics, empirical CDFs and CSV output."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from mmsense.config import ScenarioConfig
from mmsense.echo import make_symbols, noise_std_from_budget, synthesize_received, zero_force
from mmsense.errors import NoMeasurementError
from mmsense.fusion import Algorithm, PositionEstimate, estimate_position, normalize_weights
from mmsense.periodogram import BsMeasurement, compute_periodogram, dump_periodogram, measure
from mmsense.scene import propagation_paths, target_at

log = logging.getLogger(__name__)

METRICS = ("positioning", "distance", "single")


@dataclass(frozen=True)
class BsStepInfo:
    bs_id: int
    true_distance: float
    measurement: BsMeasurement
    normalized_weight: float  # 0 when not detected or fusion skipped

    @property
    def single_error(self) -> float:
        """|d_hat - d*| of the BS's own estimate (NaN if not detected)."""
        return abs(self.measurement.range - self.true_distance)


@dataclass(frozen=True)
class FusionResult:
    algorithm: Algorithm
    estimate: PositionEstimate | None  # None: skipped, no detections
    position_error: float
    fused_distance_errors: dict[int, float]  # bs_id -> | ||x_hat - x_k|| - d*_k |

    @property
    def skipped(self) -> bool:
        return self.estimate is None


@dataclass(frozen=True)
class StepRecord:
    step: int
    true_position: np.ndarray
    bs: tuple[BsStepInfo, ...]
    fusion: dict[Algorithm, FusionResult]


def step_seeds(master_seed: int, bs_id: int, step: int) -> tuple[int, int]:
    """(symbol seed, noise seed) for one BS grid, independent across BSs and steps."""
    symbol_seed, noise_seed = np.random.SeedSequence([master_seed, bs_id, step]).generate_state(2)
    return int(symbol_seed), int(noise_seed)


def run_step(config: ScenarioConfig, step: int, dump_dir: Path | None = None) -> StepRecord:
    params = config.ofdm
    target = target_at(config.trajectory, step, config.target_rcs)
    pad_n, pad_m = config.periodogram.padded_sizes(params)
    measurements = []
    true_distances = []
    for bs in config.bss:
        paths = propagation_paths(bs, target, list(config.scatterers), params.carrier_freq)
        symbol_seed, noise_seed = step_seeds(config.master_seed, bs.id, step)
        symbols = make_symbols(params, symbol_seed)
        noise_std = noise_std_from_budget(params, config.noise_figure, bs.tx_power)
        raw = synthesize_received(params, paths, symbols, noise_std, noise_seed)
        grid = zero_force(raw, symbols, params)
        pmap = compute_periodogram(grid, pad_n, pad_m)
        if dump_dir is not None:
            dump_periodogram(pmap, dump_dir / f"step{step:05d}_bs{bs.id}")
        measurements.append(measure(grid, bs, config.periodogram, pmap=pmap))
        true_distances.append(float(np.linalg.norm(target.position - bs.position)))

    try:
        normalized = {m.bs_id: m.weight for m in normalize_weights(measurements)}
    except NoMeasurementError:
        normalized = {}
    bs_info = tuple(
        BsStepInfo(bs.id, d_true, m, normalized.get(bs.id, 0.0))
        for bs, d_true, m in zip(config.bss, true_distances, measurements)
    )

    fusion = {}
    for fcfg in config.fusion:
        if not normalized:
            log.warning("step %d: no BS detected the target, fusion %s skipped", step, fcfg.algorithm.value)
            fusion[fcfg.algorithm] = FusionResult(fcfg.algorithm, None, math.nan, {b.bs_id: math.nan for b in bs_info})
            continue
        est = estimate_position(measurements, fcfg)
        fused_err = {
            bs.id: abs(float(np.linalg.norm(est.position - bs.position)) - d_true)
            for bs, d_true in zip(config.bss, true_distances)
        }
        pos_err = float(np.linalg.norm(est.position - target.position))
        fusion[fcfg.algorithm] = FusionResult(fcfg.algorithm, est, pos_err, fused_err)
    return StepRecord(step, target.position, bs_info, fusion)


def run_scenario(
    config: ScenarioConfig, dump_dir: str | Path | None = None, dump_steps: set[int] | None = None
) -> list[StepRecord]:
    """Evaluate every (strided) trajectory step; deterministic given ``master_seed``.

    Periodograms are dumped to ``dump_dir`` for the steps in ``dump_steps``
    (all evaluated steps when ``dump_steps`` is None).
    """
    if dump_dir is not None:
        dump_dir = Path(dump_dir)
        dump_dir.mkdir(parents=True, exist_ok=True)
    records = []
    for step in config.steps:
        dump_here = dump_dir if dump_dir is not None and (dump_steps is None or step in dump_steps) else None
        records.append(run_step(config, step, dump_here))
    records.sort(key=lambda r: r.step)
    return records


@dataclass(frozen=True)
class CdfSummary:
    samples: np.ndarray  # sorted ascending

    @classmethod
    def from_samples(cls, samples) -> CdfSummary:
        arr = np.asarray(samples, dtype=float)
        arr = arr[~np.isnan(arr)]
        if arr.size == 0:
            raise ValueError("no samples to summarize")
        return cls(np.sort(arr))

    def __len__(self) -> int:
        return self.samples.size

    def percentile(self, p: float) -> float:
        """Sample at index ceil(p n) - 1 of the sorted samples, p in (0, 1]."""
        if not 0.0 < p <= 1.0:
            raise ValueError(f"percentile fraction must be in (0, 1], got {p}")
        n = self.samples.size
        # tolerance absorbs products like 0.7 * 10 = 7.000000000000001
        idx = max(math.ceil(p * n - 1e-9) - 1, 0)
        return float(self.samples[idx])

    @property
    def median(self) -> float:
        return self.percentile(0.5)

    def probabilities(self) -> np.ndarray:
        n = self.samples.size
        return np.arange(1, n + 1) / n


def metric_samples(records: list[StepRecord], metric: str, algorithm=None, bs_id: int | None = None) -> list[float]:
    """Error samples for one metric.

    ``positioning``: ||x_hat - x*|| per step. ``distance``: fused distance error,
    pooled over BSs unless ``bs_id`` is given. ``single``: the BS's own
    |d_hat - d*| (no algorithm).
    """
    if metric not in METRICS:
        raise ValueError(f"unknown metric '{metric}', expected one of {METRICS}")
    out = []
    for rec in records:
        if metric == "single":
            out.extend(b.single_error for b in rec.bs if bs_id is None or b.bs_id == bs_id)
            continue
        res = rec.fusion[Algorithm(algorithm)]
        if res.skipped:
            continue
        if metric == "positioning":
            out.append(res.position_error)
        else:
            out.extend(err for k, err in res.fused_distance_errors.items() if bs_id is None or k == bs_id)
    return out


def summarize(records: list[StepRecord], metric: str, algorithm=None, bs_id: int | None = None) -> CdfSummary:
    return CdfSummary.from_samples(metric_samples(records, metric, algorithm, bs_id))


def steps_header(bs_ids) -> list[str]:
    cols = ["step", "algorithm", "true_x", "true_y", "true_z", "est_x", "est_y", "est_z", "pos_error_m"]
    for k in bs_ids:
        cols += [f"d_true_{k}", f"d_hat_{k}", f"w_{k}", f"sigma2_{k}", f"detected_{k}", f"fused_dist_err_{k}"]
    return cols


def _steps_rows(records: list[StepRecord]):
    for rec in records:
        for algorithm, res in rec.fusion.items():
            est = res.estimate.position if res.estimate is not None else [math.nan] * 3
            row = [rec.step, algorithm.value, *map(float, rec.true_position), *map(float, est), res.position_error]
            for b in rec.bs:
                m = b.measurement
                row += [
                    b.true_distance,
                    m.range,
                    b.normalized_weight,
                    m.variance,
                    int(m.detected),
                    res.fused_distance_errors[b.bs_id],
                ]
            yield row


def _write_csv(path: Path, header, rows):
    try:
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            writer.writerows(rows)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def output_summaries(records: list[StepRecord]) -> dict[str, CdfSummary]:
    """All CDFs written next to steps.csv, keyed by file stem suffix."""
    if not records:
        return {}
    bs_ids = [b.bs_id for b in records[0].bs]
    summaries = {}

    def add(key, samples):
        if any(not math.isnan(s) for s in samples):
            summaries[key] = CdfSummary.from_samples(samples)

    for algorithm in records[0].fusion:
        a = algorithm.value
        add(f"positioning_{a}", metric_samples(records, "positioning", algorithm))
        add(f"distance_{a}", metric_samples(records, "distance", algorithm))
        for k in bs_ids:
            add(f"distance_bs{k}_{a}", metric_samples(records, "distance", algorithm, k))
    for k in bs_ids:
        add(f"distance_bs{k}_single", metric_samples(records, "single", bs_id=k))
    return summaries


def write_outputs(records: list[StepRecord], summaries: dict[str, CdfSummary] | None, out_dir: str | Path) -> list[Path]:
    """Write ``steps.csv`` and one ``cdf_<metric>_<algorithm>.csv`` per summary."""
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out_dir}: {exc}") from exc
    if summaries is None:
        summaries = output_summaries(records)
    bs_ids = [b.bs_id for b in records[0].bs] if records else []
    written = [out_dir / "steps.csv"]
    _write_csv(written[0], steps_header(bs_ids), _steps_rows(records))
    for key, summary in summaries.items():
        path = out_dir / f"cdf_{key}.csv"
        _write_csv(path, ["error_m", "cumulative_probability"], zip(summary.samples.tolist(), summary.probabilities().tolist()))
        written.append(path)
    return written


def read_steps_csv(path: str | Path) -> list[dict[str, str]]:
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            return list(csv.DictReader(fh))
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc}") from exc


def csv_metric_samples(rows: list[dict[str, str]], metric: str, algorithm: str) -> list[float]:
    """Metric samples recovered from steps.csv rows (``positioning`` or ``distance``)."""
    rows = [r for r in rows if r["algorithm"] == algorithm]
    if metric == "positioning":
        return [float(r["pos_error_m"]) for r in rows]
    if metric == "distance":
        return [float(v) for r in rows for k, v in r.items() if k.startswith("fused_dist_err_")]
    raise ValueError(f"metric must be 'positioning' or 'distance', got '{metric}'")
