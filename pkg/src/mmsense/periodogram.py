"""Range-Doppler periodogram processing at a single BS.

The zero-forced grid is transformed forward over OFDM symbols (Doppler) and
inverse-direction over subcarriers (delay), both zero-padded, and the squared
magnitude is taken. The dominant cell gives the range/velocity estimate; a
Gaussian fitted to the delay profile through that cell gives the measurement
variance and the (unnormalized) fusion weight.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.fft
from scipy.constants import speed_of_light as C0

from mmsense.echo import OfdmParams, RxGrid
from mmsense.errors import FitDegenerateError
from mmsense.scene import BsConfig, Vec3


@dataclass(frozen=True)
class PeriodogramMap:
    """Periodogram values indexed [range_bin, doppler_bin], shape (N', M')."""

    values: np.ndarray
    range_bin: float  # meters per range bin
    velocity_bin: float  # m/s per Doppler bin

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


@dataclass(frozen=True)
class PeakDetection:
    range_index: int
    doppler_index: int
    value: float
    threshold: float
    detected: bool


@dataclass(frozen=True)
class ProfileFit:
    amplitude: float  # periodogram units
    mean: float  # fractional range bins
    variance: float  # m^2


@dataclass(frozen=True)
class BsMeasurement:
    """Stage-one output of one BS. Estimate fields are NaN when not detected."""

    bs_id: int
    bs_position: Vec3
    range: float
    velocity: float
    variance: float
    weight: float
    detected: bool


@dataclass(frozen=True)
class PeriodogramConfig:
    range_padding: int = 4  # N' = range_padding * N_s
    doppler_padding: int = 2  # M' = doppler_padding * M
    threshold_db: float = 13.0  # detection threshold above the map median
    window_bins: int = 5  # half-width of the Gaussian fit window

    def __post_init__(self):
        if self.range_padding < 1 or self.doppler_padding < 1:
            raise ValueError("padding factors must be >= 1")
        if self.window_bins < 1:
            raise ValueError("window_bins must be >= 1")

    @property
    def threshold_factor(self) -> float:
        return 10.0 ** (self.threshold_db / 10.0)

    def padded_sizes(self, params: OfdmParams) -> tuple[int, int]:
        return self.range_padding * params.num_subcarriers, self.doppler_padding * params.num_symbols


def range_bin_size(params: OfdmParams, pad_n: int) -> float:
    return C0 / (2.0 * params.scs * pad_n)


def velocity_bin_size(params: OfdmParams, pad_m: int) -> float:
    return C0 / (2.0 * params.carrier_freq * params.total_duration * pad_m)


def compute_periodogram(grid: RxGrid, pad_n: int, pad_m: int) -> PeriodogramMap:
    """|sum_r sum_l D[l, r] exp(-j2pi l m/M') exp(+j2pi r n/N')|^2 via FFTs."""
    params = grid.params
    if pad_n < params.num_subcarriers or pad_m < params.num_symbols:
        raise ValueError(
            f"padding ({pad_n}, {pad_m}) smaller than grid ({params.num_subcarriers}, {params.num_symbols})"
        )
    # working in the (N_s, M) layout yields (N', M') without a transpose copy;
    # the delay transform goes first because it is the long one
    spectrum = scipy.fft.ifft(grid.data.T, n=pad_n, axis=0, workers=-1)
    spectrum = scipy.fft.fft(spectrum, n=pad_m, axis=1, workers=-1, overwrite_x=True)
    # ifft carries a 1/N' factor that the periodogram does not have
    spectrum *= pad_n
    values = spectrum.real**2 + spectrum.imag**2
    return PeriodogramMap(values, range_bin_size(params, pad_n), velocity_bin_size(params, pad_m))


def detect_peak(pmap: PeriodogramMap, threshold_factor: float) -> PeakDetection:
    """Global argmax, accepted when it exceeds ``threshold_factor`` times the map median."""
    values = pmap.values
    flat = int(np.argmax(values))
    n_hat, m_hat = np.unravel_index(flat, values.shape)
    peak = float(values.flat[flat])
    threshold = threshold_factor * float(np.median(values))
    detected = peak > 0 and peak >= threshold
    return PeakDetection(int(n_hat), int(m_hat), peak, threshold, detected)


def bins_to_range_velocity(peak: PeakDetection, params: OfdmParams, pad_n: int, pad_m: int) -> tuple[float, float]:
    """Map peak bins to (range m, radial velocity m/s); Doppler bins past M'/2 are negative."""
    if not peak.detected:
        raise ValueError("bins_to_range_velocity called on a non-detection")
    m_signed = peak.doppler_index - pad_m if peak.doppler_index > pad_m / 2 else peak.doppler_index
    d_hat = peak.range_index * C0 / (2.0 * params.scs * pad_n)
    v_hat = m_signed * C0 / (2.0 * params.carrier_freq * params.total_duration * pad_m)
    return d_hat, v_hat


def fit_gaussian_profile(pmap: PeriodogramMap, peak: PeakDetection, window_bins: int = 5) -> ProfileFit:
    """Fit a*exp(-(n-mu)^2 / (2 s^2)) to the delay profile at the peak Doppler bin.

    The fit is a quadratic in the log domain over n_hat +/- window_bins. Each
    log-sample is weighted by its linear value squared so that samples near
    sidelobe nulls, whose logs are huge and meaningless, do not steer the fit.
    The variance is returned in m^2; a non-concave fit falls back to one
    range bin squared.
    """
    if not peak.detected:
        raise ValueError("fit_gaussian_profile called on a non-detection")
    n_rows = pmap.values.shape[0]
    lo = max(peak.range_index - window_bins, 0)
    hi = min(peak.range_index + window_bins, n_rows - 1)
    profile = pmap.values[lo : hi + 1, peak.doppler_index]
    offsets = np.arange(lo, hi + 1, dtype=float) - peak.range_index
    usable = profile > 0
    if np.count_nonzero(usable) < 3:
        raise FitDegenerateError(f"only {np.count_nonzero(usable)} positive samples in the fit window")
    y = profile[usable]
    t = offsets[usable]
    sqrt_w = y / y.max()
    design = np.stack([np.ones_like(t), t, t * t], axis=1)
    coef, *_ = np.linalg.lstsq(design * sqrt_w[:, None], np.log(y) * sqrt_w, rcond=None)
    c0, c1, c2 = coef
    if c2 >= 0:
        return ProfileFit(amplitude=float(y.max()), mean=float(peak.range_index), variance=pmap.range_bin**2)
    s2_bins = -1.0 / (2.0 * c2)
    mu = -c1 / (2.0 * c2)
    amplitude = math.exp(c0 - c1 * c1 / (4.0 * c2))
    return ProfileFit(amplitude=amplitude, mean=peak.range_index + mu, variance=s2_bins * pmap.range_bin**2)


def measure(grid: RxGrid, bs: BsConfig, config: PeriodogramConfig, pmap: PeriodogramMap | None = None) -> BsMeasurement:
    """Periodogram, peak detection, bin mapping and profile fit for one BS.

    ``pmap`` may be passed in when the caller already computed the periodogram
    (e.g. to dump it).
    """
    pad_n, pad_m = config.padded_sizes(grid.params)
    if pmap is None:
        pmap = compute_periodogram(grid, pad_n, pad_m)
    peak = detect_peak(pmap, config.threshold_factor)
    if not peak.detected:
        nan = float("nan")
        return BsMeasurement(bs.id, bs.position, nan, nan, nan, 0.0, False)
    d_hat, v_hat = bins_to_range_velocity(peak, grid.params, pad_n, pad_m)
    fit = fit_gaussian_profile(pmap, peak, config.window_bins)
    return BsMeasurement(bs.id, bs.position, d_hat, v_hat, fit.variance, fit.amplitude, True)


def dump_periodogram(pmap: PeriodogramMap, path: str | Path) -> tuple[Path, Path]:
    """Write ``<path>.f64`` (row-major float64, [range, doppler]) and a ``<path>.txt`` sidecar."""
    base = Path(path)
    data_path = base.with_suffix(".f64")
    meta_path = base.with_suffix(".txt")
    values = np.ascontiguousarray(pmap.values, dtype="<f8")
    try:
        values.tofile(data_path)
        n_rows, n_cols = values.shape
        meta_path.write_text(
            f"pad_n {n_rows}\npad_m {n_cols}\nrange_bin_m {pmap.range_bin!r}\nvelocity_bin_mps {pmap.velocity_bin!r}\n"
        )
    except OSError as exc:
        raise OSError(f"cannot write periodogram dump {base}: {exc}") from exc
    return data_path, meta_path


def load_periodogram(path: str | Path) -> PeriodogramMap:
    base = Path(path)
    meta = {}
    for line in base.with_suffix(".txt").read_text().splitlines():
        key, value = line.split()
        meta[key] = value
    shape = (int(meta["pad_n"]), int(meta["pad_m"]))
    values = np.fromfile(base.with_suffix(".f64"), dtype="<f8").reshape(shape)
    return PeriodogramMap(values, float(meta["range_bin_m"]), float(meta["velocity_bin_mps"]))
