"""Signal conditioning for the two recognition branches.

Activity branch: zero-phase Butterworth low-pass, then PCA across the 180
CSI columns (drop the first principal component, keep the next few, median
filter).  Counting branch: weighted moving average over amplitudes, phase
sanitization, and assembly of standardized fixed-length samples.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import median_filter
from scipy.signal import fftconvolve


def butterworth_lowpass(series, rate_hz: float, cutoff_hz: float, order: int = 4):
    """Zero-phase Butterworth low-pass along axis 0.

    Realized in the frequency domain with the squared analog magnitude
    response 1 / (1 + (f / cutoff)^(2 * order)) - the zero-phase equivalent
    of running the filter forward and backward - so the attenuation of a
    tone at frequency f matches the analytic curve exactly.  DC gain is 1.
    Reflection padding suppresses circular wrap-around at the ends.
    """
    x = np.asarray(series, dtype=np.float64)
    if not 0 < cutoff_hz < rate_hz / 2:
        raise ValueError("cutoff must lie strictly between 0 and the Nyquist rate")
    if order < 1:
        raise ValueError("order must be >= 1")
    squeeze = x.ndim == 1
    if squeeze:
        x = x[:, None]
    n = x.shape[0]
    if n < 2:
        out = x.copy()
        return out[:, 0] if squeeze else out
    pad = min(n - 1, max(int(3 * rate_hz / cutoff_hz), 16))
    top = x[1 : pad + 1][::-1]
    bottom = x[-pad - 1 : -1][::-1]
    ext = np.concatenate([2 * x[0] - top, x, 2 * x[-1] - bottom])
    freqs = np.fft.rfftfreq(ext.shape[0], d=1.0 / rate_hz)
    gain = 1.0 / (1.0 + (freqs / cutoff_hz) ** (2 * order))
    out = np.fft.irfft(np.fft.rfft(ext, axis=0) * gain[:, None], n=ext.shape[0], axis=0)
    out = out[pad : pad + n]
    return out[:, 0] if squeeze else out


def pca_components(matrix: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Principal components of the column-centered matrix, strongest first.

    Returns (components, eigenvalues) where components[:, i] = H @ q_i for
    the eigenvectors q_i of Z = H^T H (H column-centered), and eigenvalues
    are sorted descending.  The eigenvalue sum equals trace(Z).
    """
    h = np.asarray(matrix, dtype=np.float64)
    if h.ndim != 2 or h.shape[0] < 2:
        raise ValueError("need a 2-D matrix with at least two rows")
    h = h - h.mean(axis=0)
    z = h.T @ h
    eigenvalues, q = np.linalg.eigh(z)
    order = np.argsort(eigenvalues)[::-1]
    eigenvalues = eigenvalues[order]
    components = h @ q[:, order]
    return components, eigenvalues


def pca_denoise(matrix: np.ndarray, keep: int = 10) -> np.ndarray:
    """Drop the dominant component, keep the next `keep`, median filter.

    The first principal component concentrates the common-mode variation
    shared by all CSI columns and is discarded; the returned matrix holds
    components 2 .. keep+1, each smoothed with a 5-point median filter.
    """
    h = np.asarray(matrix, dtype=np.float64)
    if not 1 <= keep <= h.shape[1] - 1:
        raise ValueError(f"keep must be in 1..{h.shape[1] - 1}")
    components, _ = pca_components(h)
    kept = components[:, 1 : keep + 1]
    return median_filter(kept, size=(5, 1), mode="nearest")


def weighted_moving_average(series, m: int = 100):
    """Descending-weight moving average along axis 0.

    Output t averages the m most recent samples with weights m, m-1, .., 1
    (newest heaviest).  Early samples where fewer than m values exist use
    the same descending weights over the available prefix, so the output
    length equals the input length.
    """
    x = np.asarray(series, dtype=np.float64)
    if m < 1:
        raise ValueError("m must be >= 1")
    squeeze = x.ndim == 1
    if squeeze:
        x = x[:, None]
    n = x.shape[0]
    kernel = np.arange(m, 0, -1, dtype=np.float64)  # weight m on lag 0
    if m == 1:
        num = x.copy()
    else:
        num = fftconvolve(x, kernel[:, None], mode="full", axes=0)[:n]
    lags = np.minimum(np.arange(n), m - 1)
    denom = m * (lags + 1) - lags * (lags + 1) / 2.0  # sum of m, m-1, .., m-lags
    out = num / denom[:, None]
    return out[:, 0] if squeeze else out


def unwrap(phases: np.ndarray) -> np.ndarray:
    """1-D phase unwrap: successive differences folded into (-pi, pi].

    The first element is unchanged and every output differs from its input
    by an integer multiple of 2 pi.
    """
    p = np.asarray(phases, dtype=np.float64)
    if p.ndim != 1:
        raise ValueError("unwrap expects a 1-D array")
    return np.unwrap(p)


def sanitize_phase(phase_matrix: np.ndarray, n_streams: int = 6, n_sub: int = 30) -> np.ndarray:
    """Remove the linear-in-subcarrier phase error from every time sample.

    For each time sample: unwrap each stream's phases along the subcarrier
    axis, average the unwrapped phases across streams, fit a degree-1
    polynomial against the subcarrier index, and subtract the slope term
    (only) from every stream.  The constant offset is deliberately kept.
    Input and output are (n_frames, n_streams * n_sub), stream-major.
    """
    p = np.asarray(phase_matrix, dtype=np.float64)
    if p.ndim != 2 or p.shape[1] != n_streams * n_sub:
        raise ValueError(f"expected (n_frames, {n_streams * n_sub}), got {p.shape}")
    if n_sub < 2:
        raise ValueError("need at least two subcarriers to fit a slope")
    t = p.shape[0]
    u = np.unwrap(p.reshape(t, n_streams, n_sub), axis=2)
    y = u.mean(axis=1)  # (t, n_sub)
    x = np.arange(n_sub, dtype=np.float64)
    xc = x - x.mean()
    slope = (y @ xc) / (xc @ xc)
    out = u - slope[:, None, None] * x[None, None, :]
    return out.reshape(t, n_streams * n_sub)


@dataclass(frozen=True)
class CsiWindow:
    """One network-ready sample: a standardized (window_len, 360) matrix.

    values       per-column standardized [amplitude | sanitized phase]
    column_mean  the 360 column means removed by standardization
    column_std   the 360 column standard deviations divided out
    """

    values: np.ndarray
    column_mean: np.ndarray
    column_std: np.ndarray

    @property
    def window_len(self) -> int:
        return self.values.shape[0]


def build_count_sample(amp_window: np.ndarray, phase_window: np.ndarray) -> CsiWindow:
    """Stack smoothed amplitudes and sanitized phases, standardize per column.

    Both inputs must be (window_len, k) with the same shape; the output is
    (window_len, 2k) with column means removed and unit variance, except
    that constant columns become all zeros.
    """
    a = np.asarray(amp_window, dtype=np.float64)
    p = np.asarray(phase_window, dtype=np.float64)
    if a.shape != p.shape or a.ndim != 2:
        raise ValueError(f"amplitude {a.shape} and phase {p.shape} windows must match")
    stacked = np.hstack([a, p])
    mean = stacked.mean(axis=0)
    std = stacked.std(axis=0)
    safe = np.where(std > 1e-12, std, 1.0)
    values = np.where(std > 1e-12, (stacked - mean) / safe, 0.0)
    return CsiWindow(values, mean, std)
