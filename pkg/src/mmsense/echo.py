"""Post-FFT OFDM echo synthesis.

The received grid is built directly in the symbol/subcarrier domain:
entry (m, n) is c[m, n] * sum_l g_l exp(j2pi (m T f_D,l - n tau_l df)) plus
circular Gaussian noise. Zero-forcing then strips the modulation symbols.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.constants import Boltzmann as K_B

from mmsense.errors import DivisionHazardError, ModelViolationError
from mmsense.scene import PathComponent

T0_KELVIN = 290.0
_ZF_FLOOR = 1e-12
_QPSK = np.exp(1j * (np.pi / 4 + np.arange(4) * (np.pi / 2)))


@dataclass(frozen=True)
class OfdmParams:
    num_subcarriers: int
    scs: float
    num_symbols: int
    carrier_freq: float
    cp_duration: float | None = None

    def __post_init__(self):
        if self.num_subcarriers < 1 or self.num_symbols < 1:
            raise ValueError("need at least one subcarrier and one symbol")
        if self.scs <= 0:
            raise ValueError("subcarrier spacing must be > 0")
        if self.cp_duration is None:
            # normal-CP-like default
            object.__setattr__(self, "cp_duration", self.symbol_duration / 14.0)
        elif self.cp_duration < 0:
            raise ValueError("cp_duration must be >= 0")

    @property
    def symbol_duration(self) -> float:
        """Useful symbol duration T_s = 1/df."""
        return 1.0 / self.scs

    @property
    def total_duration(self) -> float:
        """Symbol period including the cyclic prefix."""
        return self.cp_duration + self.symbol_duration

    @property
    def bandwidth(self) -> float:
        return self.num_subcarriers * self.scs

    @property
    def shape(self) -> tuple[int, int]:
        return (self.num_symbols, self.num_subcarriers)

    @classmethod
    def from_bandwidth(cls, bandwidth: float, scs: float, num_symbols: int, carrier_freq: float, cp_duration=None):
        # the tiny guard keeps e.g. 100e6/30e3 = 3333.33 from rounding below an exact integer
        num_subcarriers = math.floor(bandwidth / scs + 1e-9)
        if num_subcarriers < 1:
            raise ValueError(f"bandwidth {bandwidth} Hz is below one subcarrier spacing")
        return cls(num_subcarriers, scs, num_symbols, carrier_freq, cp_duration)


@dataclass(frozen=True)
class RxGrid:
    """Zero-forced grid, rows are OFDM symbols and columns subcarriers."""

    data: np.ndarray
    params: OfdmParams

    def __post_init__(self):
        if self.data.shape != self.params.shape:
            raise ValueError(f"grid shape {self.data.shape} does not match params {self.params.shape}")


def make_symbols(params: OfdmParams, seed: int) -> np.ndarray:
    """Random unit-modulus QPSK symbols, shape (M, N_s)."""
    rng = np.random.default_rng(seed)
    k = rng.integers(0, 4, size=params.shape, dtype=np.uint8)
    return _QPSK[k]


def channel_grid(params: OfdmParams, paths: list[PathComponent]) -> np.ndarray:
    """Noiseless multipath channel sum_l g_l exp(j2pi (m T f_D - n tau df)).

    Each path is separable in (m, n), so the sum is a rank-L outer product.
    """
    m = np.arange(params.num_symbols)
    n = np.arange(params.num_subcarriers)
    if not paths:
        return np.zeros(params.shape, dtype=complex)
    doppler = np.array([p.doppler for p in paths])
    delay = np.array([p.delay for p in paths])
    gain = np.array([p.gain for p in paths], dtype=complex)
    slow = np.exp(2j * np.pi * np.outer(m * params.total_duration, doppler))  # (M, L)
    fast = np.exp(-2j * np.pi * np.outer(delay * params.scs, n))  # (L, N_s)
    return (slow * gain) @ fast


def synthesize_received(
    params: OfdmParams,
    paths: list[PathComponent],
    symbols: np.ndarray,
    noise_std: float,
    seed: int,
) -> np.ndarray:
    """Raw (pre-ZF) received grid for one CPI.

    Noise is circular complex Gaussian with total variance ``noise_std**2``.
    Every delay must lie inside the cyclic prefix.
    """
    if symbols.shape != params.shape:
        raise ValueError(f"symbol grid shape {symbols.shape} does not match params {params.shape}")
    for p in paths:
        if p.delay >= params.cp_duration:
            raise ModelViolationError(
                f"path delay {p.delay:.4g} s exceeds the cyclic prefix {params.cp_duration:.4g} s"
            )
    raw = symbols * channel_grid(params, paths)
    if noise_std > 0:
        rng = np.random.default_rng(seed)
        noise = rng.standard_normal(params.shape) + 1j * rng.standard_normal(params.shape)
        raw += noise * (noise_std / math.sqrt(2.0))
    return raw


def zero_force(raw: np.ndarray, symbols: np.ndarray, params: OfdmParams) -> RxGrid:
    """Divide out the modulation symbols element-wise."""
    if raw.shape != symbols.shape:
        raise ValueError(f"raw grid {raw.shape} and symbols {symbols.shape} differ in shape")
    if np.any(np.abs(symbols) < _ZF_FLOOR):
        raise DivisionHazardError("modulation symbol magnitude below 1e-12")
    return RxGrid(raw / symbols, params)


def thermal_noise_power(params: OfdmParams, noise_figure: float) -> float:
    """k_B T0 B F in watts over the occupied bandwidth."""
    return K_B * T0_KELVIN * params.bandwidth * 10.0 ** (noise_figure / 10.0)


def noise_std_from_budget(params: OfdmParams, noise_figure: float, tx_power: float = 23.0) -> float:
    """Per-sample noise amplitude in path-gain units.

    Path gains are relative to unit transmit amplitude, so the noise is scaled
    by the transmit power (dBm). A noise figure of -inf yields a noiseless run.
    """
    tx_watts = 10.0 ** ((tx_power - 30.0) / 10.0)
    return math.sqrt(thermal_noise_power(params, noise_figure) / tx_watts)
