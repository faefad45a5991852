"""Transmit pulse model and the tabulated attenuated impulse response.

The per-pair echo of a point reflector is a delayed copy of a waveform that
depends on the round-trip delay tau only through frequency-dependent
absorption: h(tau, t) is the inverse transform of -lambda^2 * S(f) *
exp(-alpha0 * c * |f| * tau), truncated to a window [0, t0) so that the
system matrix stays sparse. The table samples h on a regular tau grid and
interpolates linearly in both tau and t.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["PulseModel", "ImpulseTable", "build_impulse_table"]

# trailing/leading envelope margin: amplitude down 40 dB at the window edge
_EDGE_SIGMAS = float(np.sqrt(2.0 * np.log(100.0)))


@dataclass(frozen=True)
class PulseModel:
    """Gaussian-modulated sinusoid excitation plus medium constants.

    alpha0 is the absorption rate per frequency in (MHz*m)^-1, i.e. the
    attenuation exponent for a path of length c*tau is alpha0 * |f[MHz]| * c * tau.
    ``t0`` is the truncation window of the tabulated response; if omitted it
    spans the pulse support plus four carrier periods. ``n_samples`` is the
    record length M of one pulse-echo channel.
    """

    carrier_freq: float
    sampling_freq: float
    speed: float
    n_samples: int
    alpha0: float = 30.0
    transmittance: float = 1.0
    fractional_bandwidth: float = 0.6
    t0: float | None = None

    def __post_init__(self):
        if self.carrier_freq <= 0 or self.sampling_freq <= 0:
            raise ValueError("frequencies must be positive")
        if self.speed <= 0:
            raise ValueError("speed must be positive")
        if self.alpha0 < 0:
            raise ValueError("alpha0 must be nonnegative")
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if self.t0 is None:
            object.__setattr__(self, "t0", self.default_t0())
        if self.t0 <= 0:
            raise ValueError("t0 must be positive")

    @property
    def envelope_sigma(self) -> float:
        """Std of the Gaussian envelope for the -6 dB fractional bandwidth."""
        return np.sqrt(2.0 * np.log(2.0)) / (np.pi * self.fractional_bandwidth * self.carrier_freq)

    @property
    def peak_time(self) -> float:
        """Envelope peak delay; the pulse starts near t = 0 at the -40 dB point."""
        return _EDGE_SIGMAS * self.envelope_sigma

    def default_t0(self) -> float:
        """Window end: four carrier periods past the trailing -40 dB envelope point."""
        return 2.0 * _EDGE_SIGMAS * self.envelope_sigma + 4.0 / self.carrier_freq

    def waveform(self, t: np.ndarray) -> np.ndarray:
        """Transmitted pulse s(t), unit peak amplitude."""
        t = np.asarray(t, dtype=float)
        u = t - self.peak_time
        return np.exp(-0.5 * (u / self.envelope_sigma) ** 2) * np.cos(2 * np.pi * self.carrier_freq * u)

    def spectrum(self, f: np.ndarray) -> np.ndarray:
        """Analytic Fourier transform S(f) of the pulse (two-sided, complex)."""
        f = np.asarray(f, dtype=float)
        s = self.envelope_sigma
        gauss = np.exp(-2 * np.pi**2 * s**2 * (f - self.carrier_freq) ** 2) + np.exp(
            -2 * np.pi**2 * s**2 * (f + self.carrier_freq) ** 2
        )
        return np.sqrt(2 * np.pi) * s / 2 * gauss * np.exp(-2j * np.pi * f * self.peak_time)

    def attenuation(self, f: np.ndarray, tau) -> np.ndarray:
        """Absorption factor exp(-alpha0 * c * |f| * tau), f in Hz, alpha0 per MHz*m."""
        f = np.asarray(f, dtype=float)
        tau = np.asarray(tau, dtype=float)
        return np.exp(-self.alpha0 * self.speed * (np.abs(f) / 1e6) * tau)

    @property
    def window_samples(self) -> int:
        """Number of time samples of h inside [0, t0)."""
        return int(np.ceil(self.t0 * self.sampling_freq))


@dataclass(frozen=True)
class ImpulseTable:
    """Sampled h(tau, t) on a regular tau grid, with bilinear lookup.

    ``waveforms`` has shape (n_tau, window_samples + 1); the trailing zero
    column makes time interpolation fall to zero at the window edge. Lookups
    return 0 outside t in [0, t0) and raise for tau outside the grid.
    """

    pulse: PulseModel
    tau0: float
    dtau: float
    waveforms: np.ndarray
    n_fft: int

    @property
    def n_tau(self) -> int:
        return self.waveforms.shape[0]

    @property
    def tau_max(self) -> float:
        return self.tau0 + (self.n_tau - 1) * self.dtau

    def covers(self, tau) -> bool:
        tau = np.asarray(tau)
        return bool(np.all(tau >= self.tau0 - 1e-15) and np.all(tau <= self.tau_max + 1e-15))

    def sample(self, tau, t) -> np.ndarray:
        """h(tau, t) with linear interpolation in tau and t.

        tau and t broadcast against each other; entries with t outside
        [0, t0) evaluate to zero.
        """
        tau = np.asarray(tau, dtype=float)
        t = np.asarray(t, dtype=float)
        if not self.covers(tau):
            raise ValueError("requested tau outside the tabulated range")
        tau, t = np.broadcast_arrays(tau, t)

        fs = self.pulse.sampling_freq
        p = (tau - self.tau0) / self.dtau
        j0 = np.clip(np.floor(p).astype(np.intp), 0, max(self.n_tau - 2, 0))
        wj = p - j0
        if self.n_tau == 1:
            wj = np.zeros_like(wj)

        q = t * fs
        n_t = self.waveforms.shape[1] - 1
        inside = (t >= 0.0) & (t < self.pulse.t0)
        i0 = np.clip(np.floor(q).astype(np.intp), 0, n_t - 1)
        wi = np.clip(q - i0, 0.0, 1.0)

        w = self.waveforms
        j1 = np.minimum(j0 + 1, self.n_tau - 1)
        top = (1 - wi) * w[j0, i0] + wi * w[j0, i0 + 1]
        bot = (1 - wi) * w[j1, i0] + wi * w[j1, i0 + 1]
        out = (1 - wj) * top + wj * bot
        return np.where(inside, out, 0.0)


def _fft_length(window_samples: int) -> int:
    # generous zero padding keeps time-domain aliasing of the absorption
    # kernel's slow tails out of the retained window
    n = max(4 * window_samples, 256)
    return 1 << int(np.ceil(np.log2(n)))


def build_impulse_table(pulse: PulseModel, tau_grid: np.ndarray) -> ImpulseTable:
    """Tabulate h(tau, t) for every tau in a uniformly spaced grid.

    Each row is the sampled inverse DFT of -lambda^2 * S(f) * attenuation(f, tau)
    on the sampling-rate frequency grid, windowed to t in [0, t0).
    """
    tau_grid = np.asarray(tau_grid, dtype=float)
    if tau_grid.ndim != 1 or tau_grid.size < 1:
        raise ValueError("tau_grid must be a nonempty 1-D array")
    steps = np.diff(tau_grid)
    if tau_grid.size > 1:
        if np.any(steps <= 0) or not np.allclose(steps, steps[0], rtol=1e-9):
            raise ValueError("tau_grid must be uniformly increasing")
        dtau = float(steps[0])
    else:
        dtau = 1.0

    n_t = pulse.window_samples
    n_fft = _fft_length(n_t)
    f = np.fft.fftfreq(n_fft, d=1.0 / pulse.sampling_freq)
    base = -pulse.transmittance**2 * pulse.spectrum(f)

    att = pulse.attenuation(f[None, :], tau_grid[:, None])
    h = np.fft.ifft(base[None, :] * att, axis=1).real * pulse.sampling_freq

    waveforms = np.zeros((tau_grid.size, n_t + 1))
    waveforms[:, :n_t] = h[:, :n_t]
    return ImpulseTable(pulse=pulse, tau0=float(tau_grid[0]), dtau=dtau,
                        waveforms=waveforms, n_fft=n_fft)


def tau_grid_for(pulse: PulseModel, tau_max: float) -> np.ndarray:
    """Uniform tau grid from 0 to at least tau_max, step half a sampling period."""
    step = 0.5 / pulse.sampling_freq
    n = int(np.ceil(tau_max / step)) + 2
    return np.arange(n) * step


__all__.append("tau_grid_for")
