"""2D FFT machinery for amplitude/phase style manipulation.

Images are (H, W, C) float arrays with pixel values in [0, 1]; H and W must
be powers of two (in-house radix-2 transform). The forward transform is
unnormalized (DC bin equals the pixel sum) and no fftshift is applied
anywhere, so keys, mixing and similarity all share the same bin layout.
Transforms run per channel in double precision.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Spectrum",
    "AmplitudeKey",
    "fft2",
    "ifft2",
    "average_amplitude",
    "mix_amplitudes",
    "sample_simplex",
    "style_augment",
    "amplitude_cosine",
]


@dataclass
class Spectrum:
    """Per-channel amplitude (>= 0) and phase (radians) of an image."""

    amplitude: np.ndarray  # (H, W, C)
    phase: np.ndarray  # (H, W, C)


@dataclass
class AmplitudeKey:
    """Dataset-averaged amplitude spectrum used as a domain signature."""

    key: np.ndarray  # (H, W, C), >= 0
    domain_index: int = 0


def _check_pow2(n: int) -> None:
    if n < 1 or (n & (n - 1)) != 0:
        raise ValueError(f"radix-2 FFT needs power-of-two size, got {n}")


def _bit_reverse_indices(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for _ in range(bits):
        rev = (rev << 1) | (idx & 1)
        idx >>= 1
    return rev


def _fft1d(a: np.ndarray, inverse: bool = False) -> np.ndarray:
    """Iterative radix-2 Cooley-Tukey along the last axis; batched."""
    n = a.shape[-1]
    _check_pow2(n)
    a = a[..., _bit_reverse_indices(n)].astype(np.complex128, copy=True)
    sign = 1.0 if inverse else -1.0
    size = 2
    while size <= n:
        half = size // 2
        w = np.exp(sign * 2j * np.pi * np.arange(half) / size)
        b = a.reshape(a.shape[:-1] + (n // size, size))
        even = b[..., :half]
        odd = b[..., half:] * w
        a = np.concatenate([even + odd, even - odd], axis=-1).reshape(a.shape)
        size *= 2
    if inverse:
        a = a / n
    return a


def _fft2_channel(a: np.ndarray, inverse: bool = False) -> np.ndarray:
    """2-d transform over the last two axes (rows then columns)."""
    a = _fft1d(a, inverse)  # along W
    a = np.swapaxes(a, -1, -2)
    a = _fft1d(a, inverse)  # along H
    return np.swapaxes(a, -1, -2)


def fft2(image: np.ndarray) -> Spectrum:
    """Decompose an (H, W, C) image into amplitude and phase spectra."""
    image = np.asarray(image)
    if image.ndim != 3:
        raise ValueError(f"expected (H, W, C) image, got shape {image.shape}")
    h, w, _ = image.shape
    _check_pow2(h)
    _check_pow2(w)
    if not np.all(np.isfinite(image)):
        raise ValueError("image contains non-finite values")
    chans = np.moveaxis(image.astype(np.float64), -1, 0)  # (C, H, W)
    freq = _fft2_channel(chans.astype(np.complex128))
    amplitude = np.abs(freq)
    phase = np.angle(freq)
    return Spectrum(np.moveaxis(amplitude, 0, -1), np.moveaxis(phase, 0, -1))


def ifft2(spectrum: Spectrum) -> np.ndarray:
    """Rebuild an image from amplitude * exp(i*phase); clamps to [0, 1]."""
    amp = np.asarray(spectrum.amplitude, dtype=np.float64)
    phase = np.asarray(spectrum.phase, dtype=np.float64)
    if amp.shape != phase.shape:
        raise ValueError(f"amplitude shape {amp.shape} != phase shape {phase.shape}")
    if amp.ndim != 3:
        raise ValueError(f"expected (H, W, C) spectra, got shape {amp.shape}")
    freq = np.moveaxis(amp * np.exp(1j * phase), -1, 0)
    img = _fft2_channel(freq, inverse=True).real
    img = np.moveaxis(img, 0, -1)
    return np.clip(img, 0.0, 1.0).astype(np.float32)


def average_amplitude(dataset, domain_index: int = 0) -> AmplitudeKey:
    """Elementwise mean of the amplitude spectra of all images in ``dataset``.

    ``dataset`` is an iterable of (H, W, C) images of uniform shape.
    """
    total = None
    count = 0
    for image in dataset:
        amp = fft2(image).amplitude
        if total is None:
            total = amp
        else:
            if amp.shape != total.shape:
                raise ValueError(f"non-uniform image shapes: {amp.shape} vs {total.shape}")
            total = total + amp
        count += 1
    if count == 0:
        raise ValueError("cannot average amplitudes of an empty dataset")
    return AmplitudeKey((total / count).astype(np.float32), domain_index)


def mix_amplitudes(keys: list[AmplitudeKey], lam) -> np.ndarray:
    """Convex combination of amplitude keys with weights ``lam``."""
    lam = np.asarray(lam, dtype=np.float64)
    if len(keys) == 0 or lam.shape != (len(keys),):
        raise ValueError(f"need len(keys) == len(lam) >= 1, got {len(keys)} and {lam.shape}")
    if np.any(lam < 0) or abs(lam.sum() - 1.0) >= 1e-6:
        raise ValueError(f"weights must be >= 0 and sum to 1, got sum {lam.sum()!r}")
    mixed = np.zeros_like(np.asarray(keys[0].key, dtype=np.float64))
    for w, k in zip(lam, keys):
        arr = np.asarray(k.key, dtype=np.float64)
        if arr.shape != mixed.shape:
            raise ValueError(f"key shape mismatch: {arr.shape} vs {mixed.shape}")
        mixed += w * arr
    return mixed


def sample_simplex(t: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform draw from the (t-1)-simplex (flat Dirichlet)."""
    if t < 1:
        raise ValueError(f"need t >= 1, got {t}")
    if t == 1:
        return np.ones(1)
    return rng.dirichlet(np.ones(t))


def style_augment(x: np.ndarray, keys: list[AmplitudeKey], rng: np.random.Generator,
                  phase: np.ndarray | None = None) -> np.ndarray:
    """Resynthesize ``x`` from its own phase and a random mixture of keys.

    The label of the result is the label of ``x``. ``phase`` may be passed
    to reuse a precomputed phase spectrum.
    """
    if not keys:
        raise ValueError("style_augment needs at least one amplitude key")
    if phase is None:
        phase = fft2(x).phase
    lam = sample_simplex(len(keys), rng)
    mixed = mix_amplitudes(keys, lam)
    return ifft2(Spectrum(mixed, phase))


def amplitude_cosine(a: np.ndarray, k: AmplitudeKey | np.ndarray) -> float:
    """Cosine similarity between two amplitude spectra; in [0, 1]."""
    ka = k.key if isinstance(k, AmplitudeKey) else k
    av = np.asarray(a, dtype=np.float64).reshape(-1)
    kv = np.asarray(ka, dtype=np.float64).reshape(-1)
    if av.shape != kv.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {ka.shape}")
    na = np.linalg.norm(av)
    nk = np.linalg.norm(kv)
    if na == 0.0 or nk == 0.0:
        raise ValueError("cosine similarity of a zero-norm amplitude")
    return float(np.dot(av, kv) / (na * nk))
