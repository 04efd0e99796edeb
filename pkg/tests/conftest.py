import struct
import wave

import numpy as np
import pytest


def write_wav(path, samples, sample_rate=16000, channels=1):
    """Write float samples in [-1, 1] as a PCM 16-bit WAV file."""
    samples = np.asarray(samples, dtype=np.float64)
    ints = np.clip(np.round(samples * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as wav:
        wav.setnchannels(channels)
        wav.setsampwidth(2)
        wav.setframerate(sample_rate)
        wav.writeframes(ints.tobytes())
    return str(path)


def write_wav_raw_ints(path, ints, sample_rate=16000, channels=1):
    """Write int16 values directly (no scaling)."""
    ints = np.asarray(ints, dtype="<i2")
    with wave.open(str(path), "wb") as wav:
        wav.setnchannels(channels)
        wav.setsampwidth(2)
        wav.setframerate(sample_rate)
        wav.writeframes(ints.tobytes())
    return str(path)


@pytest.fixture
def wav_writer(tmp_path):
    def factory(name, samples, sample_rate=16000, channels=1):
        return write_wav(tmp_path / name, samples, sample_rate, channels)
    return factory


def projected_gradient_qp(K, y, C, iters=1500, bisections=60):
    """Independent brute-force SVM dual solver.

    Projected gradient ascent with an exact projection onto the feasible
    set {0 <= a <= C, a.y = 0}; the projection's equality multiplier is
    found by bisection on the monotone function nu -> clip(a + nu*y).y.
    """
    y = np.asarray(y, dtype=np.float64)
    Q = (y[:, np.newaxis] * y[np.newaxis, :]) * np.asarray(K, dtype=np.float64)
    step = 1.0 / max(np.linalg.eigvalsh(Q).max(), 1e-12)
    alpha = np.zeros(y.size)

    def project(a):
        lo, hi = -1e6, 1e6
        for _ in range(bisections):
            nu = 0.5 * (lo + hi)
            if np.clip(a + nu * y, 0.0, C) @ y > 0.0:
                hi = nu
            else:
                lo = nu
        return np.clip(a + 0.5 * (lo + hi) * y, 0.0, C)

    for _ in range(iters):
        new = project(alpha + step * (1.0 - Q @ alpha))
        if np.max(np.abs(new - alpha)) < 1e-15:
            return new
        alpha = new
    return alpha
