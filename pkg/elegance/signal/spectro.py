import librosa
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import signal as sps

from elegance.errors import ContractError, DomainError
from elegance.signal.waveform import Waveform


def mel_spectrogram(
    wave: Waveform,
    n_fft: int = 256,
    hop: int = 128,
    n_mels: int = 40,
) -> np.ndarray:
    """Mel-weighted magnitude spectrogram, shape (n_mels, 1 + (len - n_fft) // hop).

    Frames are taken without centring or padding so the frame count follows
    the plain framing formula.
    """
    if n_fft <= 0 or n_fft & (n_fft - 1):
        raise ContractError(f"n_fft must be a power of two, got {n_fft}")
    if not 0 < hop <= n_fft:
        raise ContractError(f"hop must be in (0, n_fft], got {hop}")
    if len(wave) < n_fft:
        raise DomainError(f"Waveform of {len(wave)} samples is shorter than n_fft={n_fft}")

    frames = sliding_window_view(wave.samples, n_fft)[::hop]
    window = sps.get_window("hann", n_fft)
    magnitude = np.abs(np.fft.rfft(frames * window, axis=1))
    basis = librosa.filters.mel(sr=wave.sample_rate, n_fft=n_fft, n_mels=n_mels)
    return basis.astype(np.float64) @ magnitude.T


def mel_band_edges(sample_rate: int, n_mels: int) -> np.ndarray:
    """Triangle corner frequencies; band k spans [edges[k], edges[k + 2]]."""
    return librosa.mel_frequencies(n_mels=n_mels + 2, fmin=0.0, fmax=sample_rate / 2.0)


def to_db(mel: np.ndarray, floor_db: float = -100.0) -> np.ndarray:
    """Amplitude to dB with an absolute floor; silence maps to floor_db."""
    return librosa.amplitude_to_db(mel, ref=1.0, amin=10.0 ** (floor_db / 20.0), top_db=None)
