"""Force histories and the scalar diagnostics computed from them."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import NoOscillationDetected, ZeroReferenceVelocity


def drag_lift_coefficients(F, cfg, length=None):
    """``(C_d, C_l) = F / (rho u_ref^2 l_ref / 2)`` for a physical force per unit span.

    With the default ``cfg`` scales (``rho = u_ref = l_ref = 1``) a
    nondimensional force can be passed directly.
    """
    if cfg.u_ref == 0:
        raise ZeroReferenceVelocity("reference velocity is zero; coefficients are undefined")
    ell = cfg.l_ref if length is None else length
    q = 0.5 * cfg.rho * cfg.u_ref ** 2 * ell
    F = np.asarray(F, dtype=float)
    return float(F[0] / q), float(F[1] / q)


def nondimensional_coefficients(F_nd):
    """Coefficients of a nondimensional force (unit density, velocity and length)."""
    F_nd = np.asarray(F_nd, dtype=float)
    return float(2.0 * F_nd[0]), float(2.0 * F_nd[1])


@dataclass
class ForceHistory:
    """Rows of ``(t, F_x, F_y, C_d, C_l)`` with strictly increasing ``t``."""

    t: list = field(default_factory=list)
    Fx: list = field(default_factory=list)
    Fy: list = field(default_factory=list)
    Cd: list = field(default_factory=list)
    Cl: list = field(default_factory=list)

    def append(self, t, F, C):
        if self.t and not t > self.t[-1]:
            raise ValueError("force history times must increase strictly")
        self.t.append(float(t))
        self.Fx.append(float(F[0]))
        self.Fy.append(float(F[1]))
        self.Cd.append(float(C[0]))
        self.Cl.append(float(C[1]))

    def __len__(self):
        return len(self.t)

    def as_array(self) -> np.ndarray:
        return np.column_stack([self.t, self.Fx, self.Fy, self.Cd, self.Cl]) if self.t else np.zeros((0, 5))

    @classmethod
    def from_array(cls, arr):
        arr = np.asarray(arr, dtype=float).reshape(-1, 5)
        h = cls()
        for row in arr:
            h.append(row[0], row[1:3], row[3:5])
        return h

    def tail(self, fraction=0.5) -> np.ndarray:
        """Rows after discarding the leading ``fraction`` of samples."""
        a = self.as_array()
        return a[int(np.floor(fraction * len(a))):]


def _peak_times(t, y):
    """Local maxima of ``y`` refined by a parabola through each peak and its neighbours."""
    i = np.nonzero((y[1:-1] > y[:-2]) & (y[1:-1] >= y[2:]))[0] + 1
    out = []
    for k in i:
        y0, y1, y2 = y[k - 1], y[k], y[k + 1]
        den = y0 - 2.0 * y1 + y2
        off = 0.5 * (y0 - y2) / den if den != 0 else 0.0
        dt = 0.5 * (t[k + 1] - t[k - 1])
        out.append(t[k] + off * dt)
    return np.array(out)


def oscillation_period(t, y, min_amplitude=1e-4):
    """Mean peak-to-peak period of ``y(t)`` (mean removed)."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    y = y - y.mean()
    amp = 0.5 * (y.max() - y.min()) if y.size else 0.0
    if amp < min_amplitude:
        raise NoOscillationDetected(f"oscillation amplitude {amp:.2e} below {min_amplitude:.0e}")
    # ignore small wiggles: split the record into excursions above +amp/2,
    # separated by dips below -amp/2, and keep the highest peak of each
    state = np.zeros(y.size, dtype=int)
    level = 0
    for i, v in enumerate(y):
        if v > 0.5 * amp:
            level = 1
        elif v < -0.5 * amp:
            level = -1
        state[i] = level
    starts = np.nonzero((state[1:] == 1) & (state[:-1] != 1))[0] + 1
    if state[0] == 1:
        starts = np.r_[0, starts]
    ends = np.r_[starts[1:], y.size]
    peaks = _peak_times(t, y)
    keep = []
    for i0, i1 in zip(starts, ends):
        inside = peaks[(peaks >= t[i0]) & (peaks < t[i1 - 1])] if peaks.size else peaks
        if inside.size:
            keep.append(inside[np.argmax(np.interp(inside, t, y))])
    if len(keep) < 2:
        raise NoOscillationDetected("fewer than two oscillation peaks")
    return float(np.mean(np.diff(keep))), len(keep) - 1


def strouhal_number(history: ForceHistory, cfg=None, discard=0.5, min_periods=1) -> float:
    """``St = f l_ref / u_ref`` from the lift coefficient after dropping the transient.

    Times in ``history`` are nondimensional, so ``St`` is the reciprocal of the
    mean lift period.
    """
    a = history.tail(discard)
    if len(a) < 5:
        raise NoOscillationDetected("history too short")
    period, n = oscillation_period(a[:, 0], a[:, 4])
    if n < min_periods:
        raise NoOscillationDetected(f"only {n} lift periods after discarding the transient")
    return 1.0 / period


def shedding_statistics(history: ForceHistory, discard=0.5) -> dict:
    """Mean drag, drag fluctuation, lift amplitude and Strouhal number."""
    a = history.tail(discard)
    cd, cl = a[:, 3], a[:, 4]
    stats = {"mean_cd": float(cd.mean()), "cd_amplitude": float(0.5 * (cd.max() - cd.min())),
             "cl_amplitude": float(0.5 * (cl.max() - cl.min())), "mean_cl": float(cl.mean())}
    try:
        period, n = oscillation_period(a[:, 0], cl)
        stats.update(strouhal=1.0 / period, periods=n)
    except NoOscillationDetected:
        stats.update(strouhal=None, periods=0)
    return stats


def normalize_max(signal) -> np.ndarray:
    """Scale so the maximum equals exactly one (by the maximum absolute value if no positive peak)."""
    signal = np.asarray(signal, dtype=float)
    peak = signal.max()
    if peak <= 0:
        peak = np.abs(signal).max()
    if peak == 0:
        raise ValueError("cannot normalize an all-zero signal")
    out = signal / peak
    out[np.argmax(signal if signal.max() > 0 else np.abs(signal))] = 1.0
    return out


def dominant_frequency(t, y, pad=8):
    """Frequency of the largest non-DC spectral peak (uniform sampling, zero padding)."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float) - np.mean(y)
    dt = t[1] - t[0]
    n = pad * y.size
    spec = np.abs(np.fft.rfft(y * np.hanning(y.size), n))
    freqs = np.fft.rfftfreq(n, dt)
    k = int(np.argmax(spec[1:]) + 1)
    if 0 < k < spec.size - 1:
        a, b, c = np.log(spec[k - 1:k + 2] + 1e-300)
        den = a - 2 * b + c
        off = 0.5 * (a - c) / den if den != 0 else 0.0
    else:
        off = 0.0
    return float(freqs[k] + off * (freqs[1] - freqs[0]))


def cycle_rms_difference(t, y, period, start=None):
    """RMS difference between consecutive cycles, relative to the signal amplitude.

    Cycles are compared on a common phase grid by linear interpolation, from
    ``start`` (default: after the first cycle) to the end of the record.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    start = t[0] + period if start is None else start
    n_cycles = int(np.floor((t[-1] - start) / period + 1e-9))
    if n_cycles < 2:
        raise ValueError("need at least two full cycles after the start time")
    phase = np.linspace(0.0, period, 64, endpoint=False)
    cycles = [np.interp(start + c * period + phase, t, y) for c in range(n_cycles)]
    amp = 0.5 * (np.max(cycles) - np.min(cycles))
    diffs = [np.sqrt(np.mean((cycles[c + 1] - cycles[c]) ** 2)) for c in range(n_cycles - 1)]
    return float(max(diffs) / amp) if amp > 0 else 0.0
