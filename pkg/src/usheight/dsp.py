"""Signal conditioning and reorganization of raw echo traces.

Pipeline (each stage is a pure function):

1. band-pass FIR around the carrier — removes the ADC's DC offset and
   out-of-band noise without phase distortion (linear-phase taps),
2. IQ mix with exp(-2j*pi*fc*t) — shifts the carrier to zero frequency,
3. low-pass FIR — suppresses the mixing image at 2*fc (aliased to
   |fs - 2*fc| for the sampled signal), leaving the complex envelope,
4. band-limited resampling of the 3,300-sample envelope to 196 points
   (nominal 6.5 kHz, a rate reduction of ~16.84),
5. row-major reshape to a 14x14 complex grid,
6. rescale and quantize to two 16-bit channels (real/imaginary), which fit
   losslessly in a two-color-channel PNG (red = real, green = imaginary).

Filtering and interpolation treat the measurement window as periodic: the
window length is an integer number of carrier and image-tone cycles, so
circular edges keep the stop-band contracts valid right up to the first
and last sample (zero padding would not).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from . import pngio
from .echosim import CLASS_NAMES, HeightClass, RawTrace, SignalConfig
from .errors import DesignError, FormatError

BANDPASS_TAPS = 255
LOWPASS_TAPS = 127
LOWPASS_CUTOFF_HZ = 4_200.0   # flat to ~1.8 kHz, stop-band before the image band
RESAMPLE_HALF_WIDTH = 48      # windowed-sinc support, input samples per side
RESAMPLE_KAISER_BETA = 10.0

GRID_SIDE = 14
QMAX = 65_535  # 16-bit full code


class FilterKind(Enum):
    BAND_PASS = "band_pass"
    LOW_PASS = "low_pass"


@dataclass(frozen=True)
class FilterSpec:
    taps: np.ndarray
    kind: FilterKind
    group_delay_samples: int


@dataclass(frozen=True)
class Filters:
    band: FilterSpec
    low: FilterSpec


@dataclass
class ComplexEnvelope:
    samples: np.ndarray  # complex128, length 196
    rate_hz: float


@dataclass
class EnvelopeImage:
    """14x14 envelope as two quantized 16-bit channels plus scale metadata."""

    re: np.ndarray  # uint16 (14, 14)
    im: np.ndarray  # uint16 (14, 14)
    scale: float
    label: HeightClass | None = None
    clipped: int = 0  # elements clipped during quantization


@dataclass
class GrayImage:
    """Magnitude-only variant: one quantized 16-bit channel over [0, scale]."""

    values: np.ndarray  # uint16 (14, 14)
    scale: float
    label: HeightClass | None = None


def _symmetrize(taps: np.ndarray) -> np.ndarray:
    # exact tap symmetry (linear phase), immune to cos() rounding asymmetry
    return 0.5 * (taps + taps[::-1])


def _sinc_lowpass(cutoff_norm: float, n_taps: int) -> np.ndarray:
    m = (n_taps - 1) // 2
    n = np.arange(n_taps) - m
    return 2.0 * cutoff_norm * np.sinc(2.0 * cutoff_norm * n) * np.blackman(n_taps)


def frequency_response(taps: np.ndarray, freqs_hz: np.ndarray, rate_hz: float) -> np.ndarray:
    n = np.arange(taps.size)
    phase = -2j * np.pi * np.atleast_1d(freqs_hz)[:, None] * n[None, :] / rate_hz
    return (np.exp(phase) * taps[None, :]).sum(axis=1)


def _check_taps(n_taps: int) -> None:
    if n_taps % 2 == 0:
        raise DesignError(f"tap count must be odd for integer group delay, got {n_taps}")
    if n_taps < 63:
        raise DesignError(f"tap count must be >= 63, got {n_taps}")


def design_bandpass(cfg: SignalConfig, n_taps: int = BANDPASS_TAPS) -> FilterSpec:
    """Linear-phase windowed-sinc band-pass over [fc - bw, fc + bw].

    The taps are mean-subtracted so the DC gain is exactly zero, then
    normalized to unit gain at the carrier.
    """
    _check_taps(n_taps)
    f_lo = cfg.carrier_hz - cfg.bandwidth_hz
    f_hi = cfg.carrier_hz + cfg.bandwidth_hz
    if f_lo <= 0 or f_hi >= cfg.raw_rate_hz / 2.0:
        raise DesignError(
            f"pass-band [{f_lo}, {f_hi}] Hz infeasible at {cfg.raw_rate_hz} Hz"
        )
    taps = _sinc_lowpass(f_hi / cfg.raw_rate_hz, n_taps) - _sinc_lowpass(
        f_lo / cfg.raw_rate_hz, n_taps
    )
    taps = _symmetrize(taps)
    taps -= taps.mean()
    gain = np.abs(frequency_response(taps, np.array([cfg.carrier_hz]), cfg.raw_rate_hz))[0]
    taps /= gain
    return FilterSpec(taps=taps, kind=FilterKind.BAND_PASS, group_delay_samples=(n_taps - 1) // 2)


def design_lowpass(
    cfg: SignalConfig, n_taps: int = LOWPASS_TAPS, cutoff_hz: float = LOWPASS_CUTOFF_HZ
) -> FilterSpec:
    """Linear-phase windowed-sinc low-pass, unit DC gain."""
    _check_taps(n_taps)
    if not (cfg.bandwidth_hz / 2.0 < cutoff_hz < cfg.raw_rate_hz / 2.0):
        raise DesignError(f"cut-off {cutoff_hz} Hz infeasible at {cfg.raw_rate_hz} Hz")
    taps = _symmetrize(_sinc_lowpass(cutoff_hz / cfg.raw_rate_hz, n_taps))
    taps /= taps.sum()
    return FilterSpec(taps=taps, kind=FilterKind.LOW_PASS, group_delay_samples=(n_taps - 1) // 2)


def default_filters(cfg: SignalConfig) -> Filters:
    return Filters(band=design_bandpass(cfg), low=design_lowpass(cfg))


def write_taps(spec: FilterSpec, path: str | Path) -> None:
    """Export taps as plain text, one coefficient per line."""
    np.savetxt(path, spec.taps, fmt="%.18e")


def _filter_circular(x: np.ndarray, taps: np.ndarray) -> np.ndarray:
    """Group-delay-compensated FIR with periodic edges; output length = input."""
    m = (taps.size - 1) // 2
    padded = np.concatenate([x[-m:], x, x[:m]])
    return np.convolve(padded, taps, mode="valid")


def bandpass(raw: RawTrace, f: FilterSpec) -> np.ndarray:
    if f.kind is not FilterKind.BAND_PASS:
        raise ValueError(f"expected a band-pass filter, got {f.kind}")
    return _filter_circular(np.asarray(raw.samples, dtype=np.float64), f.taps)


def iq_downconvert(trace: np.ndarray, cfg: SignalConfig) -> np.ndarray:
    n = np.arange(trace.shape[0])
    return trace * np.exp(-2j * np.pi * cfg.carrier_hz * n / cfg.raw_rate_hz)


def lowpass(ctrace: np.ndarray, f: FilterSpec) -> np.ndarray:
    if f.kind is not FilterKind.LOW_PASS:
        raise ValueError(f"expected a low-pass filter, got {f.kind}")
    return _filter_circular(np.asarray(ctrace, dtype=np.complex128), f.taps)


def _kaiser(x: np.ndarray, beta: float) -> np.ndarray:
    inside = np.abs(x) < 1.0
    x = np.where(inside, x, 1.0)
    return np.where(inside, np.i0(beta * np.sqrt(1.0 - x * x)) / np.i0(beta), 0.0)


def resample_196(env: np.ndarray, cfg: SignalConfig) -> ComplexEnvelope:
    """Band-limited resampling of the envelope to 196 uniform instants.

    Instants k * duration / 196 span the measurement window; interpolation
    is normalized windowed-sinc with periodic extension. Requires the input
    band-limited below half the nominal envelope rate.
    """
    env = np.asarray(env)
    n_in = cfg.n_samples
    if env.shape != (n_in,):
        raise ValueError(f"expected {n_in} envelope samples, got shape {env.shape}")
    n_out = cfg.env_len
    half = RESAMPLE_HALF_WIDTH

    u = np.arange(n_out) * (n_in / n_out)  # output instants in input-sample units
    base = np.floor(u).astype(int)
    offsets = np.arange(-half + 1, half + 1)
    idx = base[:, None] + offsets[None, :]
    delta = u[:, None] - idx
    weights = np.sinc(delta) * _kaiser(delta / (half + 1), RESAMPLE_KAISER_BETA)
    weights /= weights.sum(axis=1, keepdims=True)
    samples = (weights * env[idx % n_in]).sum(axis=1)
    return ComplexEnvelope(samples=samples, rate_hz=cfg.env_rate_hz)


def reshape_14x14(env: ComplexEnvelope | np.ndarray) -> np.ndarray:
    """Row-major 196 -> 14x14: element (r, c) = sample[14*r + c]."""
    samples = env.samples if isinstance(env, ComplexEnvelope) else np.asarray(env)
    if samples.shape != (GRID_SIDE * GRID_SIDE,):
        raise ValueError(f"expected 196 samples, got shape {samples.shape}")
    return samples.reshape(GRID_SIDE, GRID_SIDE)


def _quantize_channel(x: np.ndarray, scale: float) -> np.ndarray:
    # round half up so 0 maps to the mid-code 32,768
    v = np.floor((x / scale + 1.0) / 2.0 * QMAX + 0.5)
    return np.clip(v, 0, QMAX).astype(np.uint16)


def quantize16(grid: np.ndarray, scale: float, label: HeightClass | None = None) -> EnvelopeImage:
    """Quantize a 14x14 complex grid to two 16-bit channels over [-scale, scale]."""
    if scale <= 0:
        raise ValueError(f"scale must be positive, got {scale}")
    grid = np.asarray(grid)
    if grid.shape != (GRID_SIDE, GRID_SIDE):
        raise ValueError(f"expected a 14x14 grid, got shape {grid.shape}")
    re, im = grid.real, grid.imag
    clipped = int(np.count_nonzero(np.abs(re) > scale) + np.count_nonzero(np.abs(im) > scale))
    return EnvelopeImage(
        re=_quantize_channel(re, scale),
        im=_quantize_channel(im, scale),
        scale=float(scale),
        label=label,
        clipped=clipped,
    )


def dequantize(img: EnvelopeImage) -> np.ndarray:
    """Back to a complex grid; differs from the original by <= scale/65535."""
    re = (img.re.astype(np.float64) / QMAX * 2.0 - 1.0) * img.scale
    im = (img.im.astype(np.float64) / QMAX * 2.0 - 1.0) * img.scale
    return re + 1j * im


def magnitude_image(img: EnvelopeImage) -> GrayImage:
    """|envelope| requantized over [0, scale]; discards the signal phase."""
    mag = np.abs(dequantize(img))
    codes = np.clip(np.floor(mag / img.scale * QMAX + 0.5), 0, QMAX).astype(np.uint16)
    return GrayImage(values=codes, scale=img.scale, label=img.label)


def network_input(img: EnvelopeImage | GrayImage) -> np.ndarray:
    """Dequantize to network range: (14, 14, 2) in [-1, 1] or (14, 14, 1) in [0, 1]."""
    if isinstance(img, EnvelopeImage):
        re = img.re.astype(np.float64) / QMAX * 2.0 - 1.0
        im = img.im.astype(np.float64) / QMAX * 2.0 - 1.0
        return np.stack([re, im], axis=-1)
    return (img.values.astype(np.float64) / QMAX)[:, :, None]


def _meta_text(scale: float, label: HeightClass | None) -> dict[str, str]:
    text = {"scale": repr(float(scale))}
    if label is not None:
        text["label"] = CLASS_NAMES[label]
        text["class_index"] = str(int(label))
    return text


def _meta_parse(text: dict[str, str], path: str | Path) -> tuple[float, HeightClass | None]:
    if "scale" not in text:
        raise FormatError(f"{path}: missing 'scale' metadata")
    try:
        scale = float(text["scale"])
    except ValueError as exc:
        raise FormatError(f"{path}: bad 'scale' value {text['scale']!r}") from exc
    label = None
    if "class_index" in text:
        try:
            label = HeightClass(int(text["class_index"]))
        except ValueError as exc:
            raise FormatError(f"{path}: bad 'class_index' {text['class_index']!r}") from exc
    return scale, label


def encode_image(img: EnvelopeImage, path: str | Path) -> None:
    """16-bit RGB PNG: red = real, green = imaginary, blue = 0."""
    channels = np.stack([img.re, img.im, np.zeros_like(img.re)], axis=-1)
    Path(path).write_bytes(pngio.encode(channels, _meta_text(img.scale, img.label)))


def decode_image(path: str | Path) -> EnvelopeImage:
    arr, text = pngio.decode(Path(path).read_bytes())
    if arr.shape != (GRID_SIDE, GRID_SIDE, 3):
        raise FormatError(f"{path}: expected 14x14 RGB, got {arr.shape[1]}x{arr.shape[0]}x{arr.shape[2]}")
    scale, label = _meta_parse(text, path)
    return EnvelopeImage(re=arr[:, :, 0].copy(), im=arr[:, :, 1].copy(), scale=scale, label=label)


def encode_gray(img: GrayImage, path: str | Path) -> None:
    """16-bit grayscale PNG for the magnitude-only variant."""
    Path(path).write_bytes(pngio.encode(img.values[:, :, None], _meta_text(img.scale, img.label)))


def decode_gray(path: str | Path) -> GrayImage:
    arr, text = pngio.decode(Path(path).read_bytes())
    if arr.shape != (GRID_SIDE, GRID_SIDE, 1):
        raise FormatError(f"{path}: expected 14x14 grayscale, got shape {arr.shape}")
    scale, label = _meta_parse(text, path)
    return GrayImage(values=arr[:, :, 0].copy(), scale=scale, label=label)


def preprocess(
    raw: RawTrace,
    cfg: SignalConfig,
    filters: Filters,
    label: HeightClass | None = None,
) -> EnvelopeImage:
    """Full chain: band-pass -> IQ mix -> low-pass -> resample -> reshape -> quantize."""
    conditioned = bandpass(raw, filters.band)
    mixed = iq_downconvert(conditioned, cfg)
    envelope = lowpass(mixed, filters.low)
    env196 = resample_196(envelope, cfg)
    grid = reshape_14x14(env196)
    return quantize16(grid, cfg.full_scale, label=label)
