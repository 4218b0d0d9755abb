"""Synthetic ultrasonic echo traces for desk-scale training and testing.

One simulated measurement cycle: a short windowed burst is transmitted, the
receiver records 30 ms at 110 kHz (3,300 samples) around a unipolar ADC with
a constant DC bias. Each labeled scenario produces

* a direct echo at round-trip delay 2*d/c, where c follows the first-order
  air model c = 331.3 + 0.606*T [m/s], with amplitude falling as 1/d^2 and
  growing monotonically with object height,
* class-dependent secondary returns separated from the direct echo by
  micro-delays shorter than one carrier period, so they overlap the direct
  pulse and act as a complex gain whose angle encodes the class,
* a small class-dependent shift of the carrier frequency (membrane/target
  interaction), visible only as a phase ramp across the echo envelope,
* additive white Gaussian noise whose level depends on ground type and
  wetness, and
* the ADC's DC offset plus 12-bit quantization.

All class signatures are collected in CLASS_SIGNATURES below so tests can
target the exact constants. Everything is a pure function of
(scenario, config, seed).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path

import numpy as np

from .errors import ConfigError, FormatError, ScenarioError

C_SOUND_0C = 331.3       # speed of sound at 0 degC [m/s]
C_SOUND_PER_K = 0.606    # first-order temperature slope [m/s/K]

# Hann-windowed tone: -6 dB full bandwidth ~= 2.0 / duration (measured).
PULSE_BW_TIME_PRODUCT = 2.0

GROUNDS = ("asphalt", "gravel", "grass")
GROUND_NOISE_SIGMA = {"asphalt": 0.0015, "gravel": 0.0040, "grass": 0.0028}
WET_NOISE_FACTOR = 1.4   # spray/absorption raises the noise floor
WET_AMP_FACTOR = 0.85    # wet surfaces absorb part of the return

AMP_BASE = 0.08          # reflected peak amplitude at h=0, d=1 m
AMP_PER_M = 0.10         # monotone height gain, saturating at 1 m
AMP_JITTER_SIGMA = 0.15  # lognormal reflectivity spread
LATERAL_GAIN_WIDTH_M = 0.6

DISTANCE_RANGE_M = (0.5, 2.5)
TEMPERATURE_RANGE_C = (5.0, 25.0)
LATERAL_RANGE_M = (0.0, 0.4)
FREQ_OFFSET_JITTER_HZ = 25.0


class HeightClass(IntEnum):
    LOWEST = 0   # below 0.10 m: drivable
    LOW = 1      # 0.10-0.30 m: drivable with care
    HIGH = 2     # 0.30-0.50 m: not drivable, door still opens
    HIGHEST = 3  # 0.50 m and up

    @property
    def label(self) -> str:
        return CLASS_NAMES[self]


CLASS_NAMES = ("lowest", "low", "high", "highest")


def class_from_height(height_m: float) -> HeightClass:
    if height_m < 0.10:
        return HeightClass.LOWEST
    if height_m < 0.30:
        return HeightClass.LOW
    if height_m < 0.50:
        return HeightClass.HIGH
    return HeightClass.HIGHEST


@dataclass(frozen=True)
class ClassSignature:
    """Per-class simulator constants (single source for tests)."""

    height_range_m: tuple[float, float]
    # secondary returns: (amplitude relative to direct, carrier phase lag [deg]);
    # each phase lag maps to a micro-delay phi/(360*fc) < one carrier period.
    multipath: tuple[tuple[float, float], ...]
    freq_offset_hz: float


CLASS_SIGNATURES: dict[HeightClass, ClassSignature] = {
    HeightClass.LOWEST: ClassSignature((0.02, 0.10), (), -900.0),
    HeightClass.LOW: ClassSignature((0.10, 0.30), ((0.50, 60.0),), -300.0),
    HeightClass.HIGH: ClassSignature((0.30, 0.50), ((0.55, 165.0), (0.25, 300.0)), 300.0),
    HeightClass.HIGHEST: ClassSignature((0.50, 1.00), ((0.50, 300.0), (0.35, 30.0)), 900.0),
}


@dataclass(frozen=True)
class SignalConfig:
    """Acquisition-chain parameters shared by the simulator and the DSP."""

    carrier_hz: float = 51_200.0
    bandwidth_hz: float = 3_000.0
    raw_rate_hz: float = 110_000.0
    duration_s: float = 0.030
    env_rate_hz: float = 6_500.0
    env_len: int = 196
    adc_bits: int = 12
    full_scale: float = 1.0

    @property
    def n_samples(self) -> int:
        return round(self.duration_s * self.raw_rate_hz)

    @property
    def pulse_duration_s(self) -> float:
        return PULSE_BW_TIME_PRODUCT / self.bandwidth_hz

    def validate(self) -> None:
        if self.bandwidth_hz <= 0:
            raise ConfigError("bandwidth must be positive (degenerate pulse)")
        if self.raw_rate_hz <= 2.0 * (self.carrier_hz + self.bandwidth_hz / 2.0):
            raise ConfigError(
                f"raw rate {self.raw_rate_hz} Hz violates Nyquist for a "
                f"{self.carrier_hz} Hz carrier with {self.bandwidth_hz} Hz bandwidth"
            )
        if self.env_len != 196 or self.env_len != 14 * 14:
            raise ConfigError(f"envelope length must be 196 (14x14), got {self.env_len}")
        if self.n_samples != 3_300:
            raise ConfigError(
                f"duration*rate must give 3,300 samples, got {self.n_samples}"
            )
        if self.adc_bits < 2:
            raise ConfigError(f"adc_bits must be >= 2, got {self.adc_bits}")
        if self.full_scale <= 0:
            raise ConfigError("full_scale must be positive")


@dataclass(frozen=True)
class ScenarioSpec:
    """One labeled measurement scenario."""

    height_class: HeightClass
    object_height_m: float
    distance_m: float
    temperature_c: float
    ground: str
    wet: bool
    lateral_offset_m: float = 0.0
    rng_seed: int = 0

    def validate(self) -> None:
        if self.object_height_m <= 0:
            raise ScenarioError(f"object height must be positive, got {self.object_height_m}")
        if self.distance_m <= 0:
            raise ScenarioError(f"distance must be positive, got {self.distance_m}")
        if self.ground not in GROUNDS:
            raise ScenarioError(f"unknown ground type {self.ground!r}")


@dataclass
class RawTrace:
    """One digitized measurement cycle (3,300 ADC samples)."""

    samples: np.ndarray
    rate_hz: float
    dc_offset: float


def speed_of_sound(temperature_c: float) -> float:
    return C_SOUND_0C + C_SOUND_PER_K * temperature_c


def _pulse_window(u: np.ndarray) -> np.ndarray:
    """Hann window on [0, 1], zero outside."""
    inside = (u >= 0.0) & (u <= 1.0)
    return np.where(inside, 0.5 * (1.0 - np.cos(2.0 * np.pi * np.clip(u, 0.0, 1.0))), 0.0)


def make_pulse(cfg: SignalConfig) -> np.ndarray:
    """Sampled transmit burst, energy-normalized to 1.

    A Hann-windowed tone at the carrier; the window length is set so the
    -6 dB spectral width matches the configured bandwidth.
    """
    cfg.validate()
    tp = cfg.pulse_duration_s
    n = int(round(tp * cfg.raw_rate_hz)) + 1
    t = np.arange(n) / cfg.raw_rate_hz
    p = _pulse_window(t / tp) * np.cos(2.0 * np.pi * cfg.carrier_hz * (t - tp / 2.0))
    return p / math.sqrt(float(np.sum(p * p)))


def _add_echo(
    out: np.ndarray,
    cfg: SignalConfig,
    peak_time_s: float,
    amplitude: float,
    freq_offset_hz: float,
) -> None:
    """Accumulate one peak-normalized echo, evaluated continuously.

    The Hann envelope peaks at peak_time_s; the carrier phase follows the
    propagation delay, so a micro-delay shifts the baseband phase by
    -2*pi*fc*dt while barely moving the envelope.
    """
    tp = cfg.pulse_duration_s
    fs = cfg.raw_rate_hz
    n0 = max(0, int(math.floor((peak_time_s - tp / 2.0) * fs)))
    n1 = min(out.size, int(math.ceil((peak_time_s + tp / 2.0) * fs)) + 1)
    if n0 >= n1:
        return
    t = np.arange(n0, n1) / fs
    rel = t - peak_time_s
    carrier = np.cos(2.0 * np.pi * (cfg.carrier_hz + freq_offset_hz) * rel)
    out[n0:n1] += amplitude * _pulse_window(rel / tp + 0.5) * carrier


def synth_trace(spec: ScenarioSpec, cfg: SignalConfig) -> RawTrace:
    """Simulate one measurement cycle for a scenario.

    Raises ScenarioError when the round-trip delay falls outside the
    measurement window.
    """
    cfg.validate()
    spec.validate()
    c = speed_of_sound(spec.temperature_c)
    delay = 2.0 * spec.distance_m / c
    if delay > cfg.duration_s:
        raise ScenarioError(
            f"echo delay {delay * 1e3:.2f} ms exceeds the "
            f"{cfg.duration_s * 1e3:.0f} ms measurement window"
        )

    rng = np.random.default_rng(spec.rng_seed)
    sig = CLASS_SIGNATURES[spec.height_class]

    amp = (AMP_BASE + AMP_PER_M * min(spec.object_height_m, 1.0)) / spec.distance_m**2
    amp *= math.exp(-((spec.lateral_offset_m / LATERAL_GAIN_WIDTH_M) ** 2))
    if spec.wet:
        amp *= WET_AMP_FACTOR
    amp *= math.exp(rng.normal(0.0, AMP_JITTER_SIGMA))
    amp *= cfg.full_scale

    dfreq = sig.freq_offset_hz + rng.uniform(-FREQ_OFFSET_JITTER_HZ, FREQ_OFFSET_JITTER_HZ)

    echoes = np.zeros(cfg.n_samples)
    _add_echo(echoes, cfg, delay, amp, dfreq)
    for rel_amp, phase_deg in sig.multipath:
        micro_delay = (phase_deg / 360.0) / cfg.carrier_hz
        _add_echo(echoes, cfg, delay + micro_delay, amp * rel_amp, dfreq)

    sigma = GROUND_NOISE_SIGMA[spec.ground] * cfg.full_scale
    if spec.wet:
        sigma *= WET_NOISE_FACTOR
    noise = rng.normal(0.0, sigma, cfg.n_samples)

    dc = 0.5 * cfg.full_scale
    analog = dc + echoes + noise

    # Unipolar ADC: clip to [0, full_scale], quantize to adc_bits levels.
    levels = (1 << cfg.adc_bits) - 1
    codes = np.round(np.clip(analog, 0.0, cfg.full_scale) / cfg.full_scale * levels)
    samples = codes / levels * cfg.full_scale
    return RawTrace(samples=samples, rate_hz=cfg.raw_rate_hz, dc_offset=dc)


def sample_scenario(
    height_class: HeightClass, rng: np.random.Generator, trace_seed: int
) -> ScenarioSpec:
    """Draw scenario parameters uniformly over their documented ranges."""
    lo, hi = CLASS_SIGNATURES[height_class].height_range_m
    return ScenarioSpec(
        height_class=height_class,
        object_height_m=float(rng.uniform(lo, hi)),
        distance_m=float(rng.uniform(*DISTANCE_RANGE_M)),
        temperature_c=float(rng.uniform(*TEMPERATURE_RANGE_C)),
        ground=GROUNDS[int(rng.integers(0, len(GROUNDS)))],
        wet=bool(rng.integers(0, 2)),
        lateral_offset_m=float(rng.uniform(*LATERAL_RANGE_M)),
        rng_seed=trace_seed,
    )


def gen_dataset(
    n_total: int, seed: int, cfg: SignalConfig
) -> list[tuple[RawTrace, ScenarioSpec]]:
    """Generate a class-balanced labeled set of synthetic traces.

    Classes are interleaved so every prefix stays near-balanced; the whole
    set is a pure function of (n_total, seed, cfg).
    """
    if n_total % 4 != 0:
        raise ValueError(f"n_total must be divisible by 4, got {n_total}")
    cfg.validate()
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n_total):
        cls = HeightClass(i % 4)
        trace_seed = int(rng.integers(0, 2**63 - 1))
        spec = sample_scenario(cls, rng, trace_seed)
        out.append((synth_trace(spec, cfg), spec))
    return out


# --- on-disk dataset: manifest.txt + little-endian float32 trace files ---

def write_traces(
    directory: str | Path, items: list[tuple[RawTrace, ScenarioSpec]]
) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    lines = []
    for i, (trace, spec) in enumerate(items):
        fname = f"trace_{i:06d}.f32"
        trace.samples.astype("<f4").tofile(directory / fname)
        lines.append(
            f"file={fname} class={spec.height_class.label} "
            f"class_index={int(spec.height_class)} "
            f"height_m={spec.object_height_m!r} distance_m={spec.distance_m!r} "
            f"temperature_c={spec.temperature_c!r} ground={spec.ground} "
            f"wet={int(spec.wet)} lateral_m={spec.lateral_offset_m!r} "
            f"seed={spec.rng_seed} rate_hz={trace.rate_hz!r} "
            f"dc_offset={trace.dc_offset!r}"
        )
    (directory / "manifest.txt").write_text("\n".join(lines) + "\n")


def read_traces(directory: str | Path) -> list[tuple[RawTrace, ScenarioSpec]]:
    directory = Path(directory)
    manifest = directory / "manifest.txt"
    if not manifest.is_file():
        raise FormatError(f"missing manifest.txt in {directory}")
    items = []
    for lineno, line in enumerate(manifest.read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        kv = {}
        for tok in line.split():
            key, sep, value = tok.partition("=")
            if not sep:
                raise FormatError(f"{manifest}:{lineno}: malformed token {tok!r}")
            kv[key] = value
        try:
            spec = ScenarioSpec(
                height_class=HeightClass(int(kv["class_index"])),
                object_height_m=float(kv["height_m"]),
                distance_m=float(kv["distance_m"]),
                temperature_c=float(kv["temperature_c"]),
                ground=kv["ground"],
                wet=bool(int(kv["wet"])),
                lateral_offset_m=float(kv["lateral_m"]),
                rng_seed=int(kv["seed"]),
            )
            rate = float(kv["rate_hz"])
            dc = float(kv["dc_offset"])
            fname = kv["file"]
        except KeyError as exc:
            raise FormatError(f"{manifest}:{lineno}: missing key {exc}") from exc
        samples = np.fromfile(directory / fname, dtype="<f4").astype(np.float64)
        if samples.size != 3_300:
            raise FormatError(
                f"{directory / fname}: expected 3,300 samples, got {samples.size}"
            )
        items.append((RawTrace(samples=samples, rate_hz=rate, dc_offset=dc), spec))
    return items
