"""MFCC feature extraction with delta and acceleration coefficients.

The clip-level representation used throughout the pipeline stacks 20
MFCCs with their first and second temporal derivatives into a 60-row
matrix (columns = frames, 30 ms window, 50% overlap under the default
configuration).

Conventions, fixed so oracles can reproduce every value: HTK mel scale
2595*log10(1 + f/700), Hamming window, pre-emphasis 0.97, 40 triangular
mel bands, mel energies floored at 1e-10 before the log, orthonormal
DCT-II with coefficient 0 retained.
"""

from dataclasses import dataclass

import numpy as np

LOG_FLOOR = 1e-10


@dataclass(frozen=True)
class MfccConfig:
    n_coeffs: int = 20
    window_ms: float = 30.0
    hop_fraction: float = 0.5
    n_mels: int = 40
    fmin: float = 0.0
    fmax: float = 8000.0
    pre_emphasis: float = 0.97
    delta_width: int = 2

    def validate(self, sample_rate=None):
        if self.n_coeffs <= 0 or self.n_mels <= 0:
            raise ValueError("n_coeffs and n_mels must be positive")
        if self.n_coeffs > self.n_mels:
            raise ValueError("n_coeffs must not exceed n_mels")
        if not 0.0 < self.hop_fraction <= 1.0:
            raise ValueError("hop_fraction must be in (0, 1]")
        if self.window_ms <= 0:
            raise ValueError("window_ms must be positive")
        if self.fmin >= self.fmax:
            raise ValueError("fmin must be below fmax")
        if self.delta_width < 1:
            raise ValueError("delta_width must be at least 1")
        if sample_rate is not None and self.fmax > sample_rate / 2:
            raise ValueError(
                f"fmax {self.fmax} Hz exceeds Nyquist for {sample_rate} Hz audio"
            )


def hz_to_mel(hz):
    return 2595.0 * np.log10(1.0 + np.asarray(hz, dtype=np.float64) / 700.0)


def mel_to_hz(mel):
    return 700.0 * (10.0 ** (np.asarray(mel, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_mels, n_fft, sample_rate, fmin, fmax):
    """Triangular mel filterbank evaluated at rFFT bin centre frequencies.

    Returns an (n_mels, n_fft // 2 + 1) weight matrix.
    """
    edges = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))
    bin_freqs = np.arange(n_fft // 2 + 1) * (sample_rate / n_fft)
    fb = np.zeros((n_mels, bin_freqs.size))
    for m in range(n_mels):
        lower, centre, upper = edges[m], edges[m + 1], edges[m + 2]
        rising = (bin_freqs - lower) / (centre - lower)
        falling = (upper - bin_freqs) / (upper - centre)
        fb[m] = np.maximum(0.0, np.minimum(rising, falling))
    return fb


def dct_matrix(n_in, n_out):
    """First n_out rows of the orthonormal DCT-II matrix of size n_in."""
    if n_out > n_in:
        raise ValueError("cannot keep more DCT rows than input dimensions")
    i = np.arange(n_in)[np.newaxis, :]
    k = np.arange(n_out)[:, np.newaxis]
    mat = np.cos(np.pi * (i + 0.5) * k / n_in)
    mat *= np.sqrt(2.0 / n_in)
    mat[0] *= np.sqrt(0.5)
    return mat


def _frame_signal(samples, window, hop):
    n_frames = (samples.size - window) // hop + 1
    idx = np.arange(window)[np.newaxis, :] + hop * np.arange(n_frames)[:, np.newaxis]
    return samples[idx]


def compute_mfcc(clip, cfg=MfccConfig()):
    """MFCCs for a clip: an (n_coeffs, n_frames) matrix.

    Pipeline: pre-emphasis, Hamming-windowed framing, power spectrum,
    triangular mel filterbank, floored log, orthonormal DCT-II keeping
    coefficients 0..n_coeffs-1.
    """
    cfg.validate(clip.sample_rate)
    window = int(round(clip.sample_rate * cfg.window_ms / 1000.0))
    hop = max(1, int(round(window * cfg.hop_fraction)))
    if clip.samples.size < window:
        raise ValueError(
            f"insufficient samples: clip has {clip.samples.size}, "
            f"one window needs {window}"
        )

    emphasized = np.concatenate(
        [clip.samples[:1], clip.samples[1:] - cfg.pre_emphasis * clip.samples[:-1]]
    )
    frames = _frame_signal(emphasized, window, hop) * np.hamming(window)

    n_fft = 1
    while n_fft < window:
        n_fft *= 2
    power = np.abs(np.fft.rfft(frames, n=n_fft, axis=1)) ** 2

    fb = mel_filterbank(cfg.n_mels, n_fft, clip.sample_rate, cfg.fmin, cfg.fmax)
    log_mel = np.log(np.maximum(power @ fb.T, LOG_FLOOR))
    return dct_matrix(cfg.n_mels, cfg.n_coeffs) @ log_mel.T


def compute_deltas(feats, width=2):
    """Regression deltas over frames with edge replication; same shape as input.

    delta_t = sum_{w=1..width} w * (c_{t+w} - c_{t-w}) / (2 * sum w^2)
    """
    if width < 1:
        raise ValueError("delta width must be at least 1")
    feats = np.asarray(feats, dtype=np.float64)
    padded = np.pad(feats, ((0, 0), (width, width)), mode="edge")
    denom = 2.0 * sum(w * w for w in range(1, width + 1))
    n = feats.shape[1]
    deltas = np.zeros_like(feats)
    for w in range(1, width + 1):
        deltas += w * (padded[:, width + w : width + w + n]
                       - padded[:, width - w : width - w + n])
    return deltas / denom


def extract_mfca(clip, cfg=MfccConfig()):
    """MFCCs stacked with their deltas and delta-deltas: (3 * n_coeffs, n_frames)."""
    mfcc = compute_mfcc(clip, cfg)
    delta = compute_deltas(mfcc, cfg.delta_width)
    accel = compute_deltas(delta, cfg.delta_width)
    return np.vstack([mfcc, delta, accel])
