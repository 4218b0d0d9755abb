"""Training and evaluation protocol: datasets, splits, loops, checkpoints.

A dataset on disk is a directory of 16-bit PNG envelope images (complex RGB
or magnitude grayscale) whose class labels ride in the PNG text metadata.
Training equalizes the class populations, holds out a fixed validation set,
iterates seeded mini-batches of 100, and retains the best-validation
checkpoint. Everything downstream of the three seeds (dataset, split,
training) is deterministic, so identical runs produce byte-identical
checkpoints.
"""

from __future__ import annotations

import hashlib
import struct
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import capsnet, cnn, dsp
from .echosim import CLASS_NAMES, HeightClass, RawTrace, ScenarioSpec, SignalConfig, gen_dataset
from .errors import ConfigError, DataError, FormatError, UsageError
from .numerics import AdamState

ARCHS = ("capsnet", "cnn")
VARIANTS = ("complex", "absolute")
EVAL_BATCH = 120  # bounds im2col memory during inference

CHECKPOINT_MAGIC = b"USHC"
CHECKPOINT_VERSION = 1


# --- image sets ---

@dataclass
class ImageSet:
    """Quantized envelope images ready for the networks.

    codes: (n, 14, 14, 2) uint16 for the complex variant, (n, 14, 14, 1)
    for the absolute variant.
    """

    codes: np.ndarray
    labels: np.ndarray
    scale: float
    variant: str

    def __len__(self) -> int:
        return int(self.codes.shape[0])

    def inputs(self) -> np.ndarray:
        """Float inputs: complex channels in [-1, 1], magnitude in [0, 1]."""
        x = self.codes.astype(np.float64) / dsp.QMAX
        return x * 2.0 - 1.0 if self.variant == "complex" else x

    def subset(self, idx: np.ndarray) -> "ImageSet":
        return ImageSet(self.codes[idx], self.labels[idx], self.scale, self.variant)

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(self.variant.encode())
        h.update(np.float64(self.scale).tobytes())
        h.update(np.ascontiguousarray(self.codes).tobytes())
        h.update(np.ascontiguousarray(self.labels.astype(np.int64)).tobytes())
        return h.hexdigest()


def images_from_list(images: list) -> ImageSet:
    """Build an ImageSet from EnvelopeImage or GrayImage objects."""
    if not images:
        raise DataError("no images given")
    first = images[0]
    complex_variant = isinstance(first, dsp.EnvelopeImage)
    codes = []
    labels = []
    for img in images:
        if img.label is None:
            raise DataError("image without a class label")
        if isinstance(img, dsp.EnvelopeImage) != complex_variant:
            raise DataError("mixed complex and magnitude images in one set")
        if img.scale != first.scale:
            raise DataError(f"inconsistent scales {img.scale} vs {first.scale}")
        if complex_variant:
            codes.append(np.stack([img.re, img.im], axis=-1))
        else:
            codes.append(img.values[:, :, None])
        labels.append(int(img.label))
    return ImageSet(
        codes=np.stack(codes),
        labels=np.array(labels, dtype=np.int64),
        scale=float(first.scale),
        variant="complex" if complex_variant else "absolute",
    )


def to_absolute(dataset: ImageSet) -> ImageSet:
    """Magnitude-only view of a complex image set (same requantization as
    dsp.magnitude_image, vectorized over the whole set)."""
    if dataset.variant != "complex":
        raise UsageError("to_absolute needs a complex image set")
    x = dataset.codes.astype(np.float64) / dsp.QMAX * 2.0 - 1.0  # units of scale
    mag = np.hypot(x[..., 0], x[..., 1])
    codes = np.clip(np.floor(mag * dsp.QMAX + 0.5), 0, dsp.QMAX).astype(np.uint16)
    return ImageSet(codes[..., None], dataset.labels.copy(), dataset.scale, "absolute")


def preprocess_traces(
    traces: list[tuple[RawTrace, ScenarioSpec]],
    cfg: SignalConfig,
    filters: dsp.Filters | None = None,
    absolute: bool = False,
) -> ImageSet:
    """Run the DSP chain over labeled traces and collect an ImageSet."""
    filters = filters or dsp.default_filters(cfg)
    images = []
    for trace, spec in traces:
        img = dsp.preprocess(trace, cfg, filters, label=spec.height_class)
        images.append(dsp.magnitude_image(img) if absolute else img)
    return images_from_list(images)


def write_images(directory: str | Path, dataset: ImageSet) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for i in range(len(dataset)):
        label = HeightClass(int(dataset.labels[i]))
        path = directory / f"img_{i:06d}.png"
        if dataset.variant == "complex":
            img = dsp.EnvelopeImage(
                re=dataset.codes[i, :, :, 0],
                im=dataset.codes[i, :, :, 1],
                scale=dataset.scale,
                label=label,
            )
            dsp.encode_image(img, path)
        else:
            dsp.encode_gray(
                dsp.GrayImage(values=dataset.codes[i, :, :, 0], scale=dataset.scale, label=label),
                path,
            )


def load_images(directory: str | Path) -> ImageSet:
    directory = Path(directory)
    paths = sorted(directory.glob("*.png"))
    if not paths:
        raise DataError(f"no PNG images found in {directory}")
    from . import pngio

    codes = []
    labels = []
    scale = None
    nch = None
    for path in paths:
        arr, text = pngio.decode(path.read_bytes())
        if arr.shape[0] != dsp.GRID_SIDE or arr.shape[1] != dsp.GRID_SIDE:
            raise FormatError(f"{path}: expected 14x14 image, got {arr.shape}")
        if nch is None:
            nch = arr.shape[2]
        elif arr.shape[2] != nch:
            raise DataError(f"{path}: mixed channel counts in dataset")
        if "scale" not in text or "class_index" not in text:
            raise FormatError(f"{path}: missing scale/class_index metadata")
        s = float(text["scale"])
        if scale is None:
            scale = s
        elif s != scale:
            raise DataError(f"{path}: scale {s} differs from {scale}")
        labels.append(int(text["class_index"]))
        codes.append(arr[:, :, :2] if nch == 3 else arr)
    return ImageSet(
        codes=np.stack(codes),
        labels=np.array(labels, dtype=np.int64),
        scale=float(scale),
        variant="complex" if nch == 3 else "absolute",
    )


# --- equalized split ---

@dataclass(frozen=True)
class SplitSpec:
    equalized_total: int = 4_800
    holdout: int = 960
    seed: int = 0

    def validate(self) -> None:
        if self.equalized_total % 4 or self.holdout % 4:
            raise ValueError("equalized_total and holdout must be divisible by 4")
        if not 0 < self.holdout < self.equalized_total:
            raise ValueError("need 0 < holdout < equalized_total")


def equalize_split(dataset: ImageSet, spec: SplitSpec) -> tuple[ImageSet, ImageSet]:
    """Seeded class-equalized selection, then a class-balanced holdout."""
    spec.validate()
    per_class = spec.equalized_total // 4
    per_class_val = spec.holdout // 4
    rng = np.random.default_rng(spec.seed)
    train_idx = []
    val_idx = []
    for k in range(4):
        pool = np.flatnonzero(dataset.labels == k)
        if pool.size < per_class:
            raise DataError(
                f"class {CLASS_NAMES[k]!r} has {pool.size} samples, needs {per_class}"
            )
        chosen = rng.permutation(pool)[:per_class]
        val_idx.append(chosen[:per_class_val])
        train_idx.append(chosen[per_class_val:])
    train = np.concatenate(train_idx)
    val = np.concatenate(val_idx)
    # one more seeded shuffle so classes interleave in batch order
    train = train[rng.permutation(train.size)]
    val = val[rng.permutation(val.size)]
    return dataset.subset(train), dataset.subset(val)


# --- confusion matrix ---

@dataclass
class ConfusionMatrix:
    """counts[predicted, actual] over the four height classes."""

    counts: np.ndarray = field(default_factory=lambda: np.zeros((4, 4), dtype=np.int64))
    class_names: tuple = CLASS_NAMES

    @classmethod
    def from_predictions(cls, predicted: np.ndarray, actual: np.ndarray) -> "ConfusionMatrix":
        counts = np.zeros((4, 4), dtype=np.int64)
        np.add.at(counts, (predicted, actual), 1)
        return cls(counts=counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def accuracy(self) -> float:
        return float(np.trace(self.counts)) / self.total

    def format_table(self) -> str:
        width = max(8, max(len(n) for n in self.class_names) + 1)
        head = " " * (11 + width) + "actual".center(width * 4)
        cols = " " * 11 + "".ljust(width) + "".join(n.rjust(width) for n in self.class_names)
        lines = [head, cols]
        for p, name in enumerate(self.class_names):
            prefix = "predicted  " if p == 0 else " " * 11
            row = "".join(str(int(c)).rjust(width) for c in self.counts[p])
            lines.append(prefix + name.ljust(width) + row)
        return "\n".join(lines)


# --- run configuration ---

@dataclass
class TrainConfig:
    data: str = ""
    arch: str = "capsnet"
    variant: str = "complex"
    seed: int = 0
    split_seed: int = 0
    epochs: int = 50
    batch_size: int = 100
    learning_rate: float = 1e-3
    routing_iterations: int = 3
    equalized_total: int = 4_800
    holdout: int = 960
    early_stop_patience: int = 10
    m_plus: float = 0.9
    m_minus: float = 0.1
    loss_lambda: float = 0.5
    checkpoint: str = ""
    metrics: str = ""

    def validate(self) -> None:
        if self.arch not in ARCHS:
            raise ConfigError(f"arch must be one of {ARCHS}, got {self.arch!r}")
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be positive")
        SplitSpec(self.equalized_total, self.holdout, self.split_seed).validate()

    def to_text(self) -> str:
        return "".join(f"{k}={v}\n" for k, v in vars(self).items())


_CONFIG_TYPES = {k: type(v) for k, v in vars(TrainConfig()).items()}


def parse_config_text(text: str, base: TrainConfig | None = None) -> TrainConfig:
    """Plain key=value lines; '#' starts a comment; unknown keys are errors."""
    cfg = replace(base) if base else TrainConfig()
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep:
            raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
        if key not in _CONFIG_TYPES:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        typ = _CONFIG_TYPES[key]
        try:
            setattr(cfg, key, typ(value) if typ is not bool else value.lower() in ("1", "true"))
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {value!r}") from exc
    return cfg


def load_config(path: str | Path, base: TrainConfig | None = None) -> TrainConfig:
    return parse_config_text(Path(path).read_text(), base)


# --- checkpoints ---

@dataclass
class Checkpoint:
    arch: str
    variant: str
    params: dict[str, np.ndarray]
    adam: AdamState
    config_text: str
    seed: int
    fingerprint: str
    version: int = CHECKPOINT_VERSION


def _pack_str(s: str) -> bytes:
    b = s.encode("utf-8")
    return struct.pack("<I", len(b)) + b


def _pack_tensor(name: str, a: np.ndarray) -> bytes:
    a = np.ascontiguousarray(a, dtype=np.float64)
    dims = struct.pack(f"<{a.ndim}Q", *a.shape) if a.ndim else b""
    return _pack_str(name) + struct.pack("<I", a.ndim) + dims + a.astype("<f8").tobytes()


def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> None:
    tensors: dict[str, np.ndarray] = dict(ckpt.params)
    for name, a in ckpt.adam.first_moment.items():
        tensors[f"adam.first.{name}"] = a
    for name, a in ckpt.adam.second_moment.items():
        tensors[f"adam.second.{name}"] = a
    tensors["adam.meta"] = np.array(
        [ckpt.adam.step_count, ckpt.adam.lr, ckpt.adam.beta1, ckpt.adam.beta2, ckpt.adam.eps]
    )
    out = [
        CHECKPOINT_MAGIC,
        struct.pack("<I", ckpt.version),
        _pack_str(ckpt.arch),
        _pack_str(ckpt.variant),
        _pack_str(ckpt.config_text),
        struct.pack("<q", ckpt.seed),
        _pack_str(ckpt.fingerprint),
        struct.pack("<I", len(tensors)),
    ]
    for name in sorted(tensors):
        out.append(_pack_tensor(name, tensors[name]))
    Path(path).write_bytes(b"".join(out))


class _Reader:
    def __init__(self, data: bytes, path):
        self.data = data
        self.off = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.off + n > len(self.data):
            raise FormatError(f"{self.path}: truncated at offset {self.off} (need {n} bytes)")
        chunk = self.data[self.off : self.off + n]
        self.off += n
        return chunk

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def i64(self) -> int:
        return struct.unpack("<q", self.take(8))[0]

    def string(self) -> str:
        return self.take(self.u32()).decode("utf-8")

    def tensor(self) -> tuple[str, np.ndarray]:
        name = self.string()
        ndim = self.u32()
        if ndim > 8:
            raise FormatError(f"{self.path}: implausible tensor rank {ndim} at offset {self.off}")
        shape = struct.unpack(f"<{ndim}Q", self.take(8 * ndim)) if ndim else ()
        count = int(np.prod(shape)) if ndim else 1
        a = np.frombuffer(self.take(8 * count), dtype="<f8").reshape(shape).copy()
        return name, a


def load_checkpoint(path: str | Path) -> Checkpoint:
    data = Path(path).read_bytes()
    r = _Reader(data, path)
    if r.take(4) != CHECKPOINT_MAGIC:
        raise FormatError(f"{path}: bad magic bytes (not a checkpoint)")
    version = r.u32()
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    arch = r.string()
    variant = r.string()
    config_text = r.string()
    seed = r.i64()
    fingerprint = r.string()
    n = r.u32()
    tensors = dict(r.tensor() for _ in range(n))
    meta = tensors.pop("adam.meta", None)
    if meta is None or meta.shape != (5,):
        raise FormatError(f"{path}: missing adam.meta tensor")
    params = {}
    first = {}
    second = {}
    for name, a in tensors.items():
        if name.startswith("adam.first."):
            first[name[len("adam.first.") :]] = a
        elif name.startswith("adam.second."):
            second[name[len("adam.second.") :]] = a
        else:
            params[name] = a
    adam = AdamState(
        first_moment=first,
        second_moment=second,
        step_count=int(meta[0]),
        lr=float(meta[1]),
        beta1=float(meta[2]),
        beta2=float(meta[3]),
        eps=float(meta[4]),
    )
    return Checkpoint(arch, variant, params, adam, config_text, seed, fingerprint, version)


def model_from_checkpoint(ckpt: Checkpoint, expect_arch: str | None = None):
    if expect_arch is not None and ckpt.arch != expect_arch:
        raise UsageError(f"checkpoint holds a {ckpt.arch!r} model, {expect_arch!r} requested")
    if ckpt.arch == "capsnet":
        return capsnet.CapsNetParams.from_dict(ckpt.params)
    if ckpt.arch == "cnn":
        return cnn.CnnParams.from_dict(ckpt.params)
    raise FormatError(f"unknown architecture tag {ckpt.arch!r}")


# --- training ---

@dataclass
class MetricsRow:
    epoch: int
    train_loss: float
    val_accuracy: float
    wall_time_s: float

    def format(self) -> str:
        return (
            f"epoch={self.epoch} train_loss={self.train_loss:.6f} "
            f"val_accuracy={self.val_accuracy:.6f} wall_time={self.wall_time_s:.2f}"
        )


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    metrics: list[MetricsRow]
    best_accuracy: float
    confusion: ConfusionMatrix


def _batched_norms_or_probs(arch: str, params, inputs: np.ndarray, routing_iterations: int):
    scores = []
    for start in range(0, inputs.shape[0], EVAL_BATCH):
        chunk = inputs[start : start + EVAL_BATCH]
        if arch == "capsnet":
            scores.append(capsnet.capsule_norms(params, chunk, routing_iterations))
        else:
            scores.append(cnn.cnn_forward(params, chunk)[0])
    return np.concatenate(scores)


def _predictions(arch: str, params, inputs: np.ndarray, routing_iterations: int) -> np.ndarray:
    return np.argmax(_batched_norms_or_probs(arch, params, inputs, routing_iterations), axis=1)


def run_training(config: TrainConfig, dataset: ImageSet | None = None, verbose: bool = False) -> TrainResult:
    """Full protocol: equalize, hold out, train with Adam, keep the best epoch."""
    config.validate()
    if dataset is None:
        if not config.data:
            raise ConfigError("no dataset directory configured")
        dataset = load_images(config.data)
    if dataset.variant != config.variant:
        raise UsageError(
            f"dataset is {dataset.variant!r} but the run wants {config.variant!r}"
        )
    split = SplitSpec(config.equalized_total, config.holdout, config.split_seed)
    train_set, val_set = equalize_split(dataset, split)
    fingerprint = dataset.fingerprint()

    in_channels = 2 if config.variant == "complex" else 1
    if config.arch == "capsnet":
        params = capsnet.CapsNetParams.init(in_channels=in_channels, seed=config.seed)
    else:
        params = cnn.CnnParams.init(in_channels=in_channels, seed=config.seed)
    opt = AdamState.init(params.as_dict(), lr=config.learning_rate)
    loss_cfg = capsnet.MarginLossConfig(config.m_plus, config.m_minus, config.loss_lambda)

    x_train = train_set.inputs()
    y_train = train_set.labels
    x_val = val_set.inputs()
    y_val = val_set.labels

    rng = np.random.default_rng(config.seed)
    best_acc = -1.0
    best_params = params
    best_opt = opt
    stagnant = 0
    metrics: list[MetricsRow] = []
    t0 = time.perf_counter()

    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(train_set))
        losses = []
        for start in range(0, order.size, config.batch_size):
            idx = order[start : start + config.batch_size]
            if config.arch == "capsnet":
                loss, params, opt = capsnet.train_step(
                    params, x_train[idx], y_train[idx], opt,
                    config.routing_iterations, loss_cfg,
                )
            else:
                loss, params, opt = cnn.cnn_train_step(params, x_train[idx], y_train[idx], opt)
            losses.append(loss)
        preds = _predictions(config.arch, params, x_val, config.routing_iterations)
        acc = float(np.mean(preds == y_val))
        row = MetricsRow(epoch, float(np.mean(losses)), acc, time.perf_counter() - t0)
        metrics.append(row)
        if verbose:
            print(row.format(), flush=True)
        if acc > best_acc:
            best_acc = acc
            best_params = params
            best_opt = opt
            stagnant = 0
        else:
            stagnant += 1
        if stagnant >= config.early_stop_patience:
            break
        if best_acc >= 1.0:  # no headroom left on the holdout
            break

    ckpt = Checkpoint(
        arch=config.arch,
        variant=config.variant,
        params=best_params.as_dict(),
        adam=best_opt,
        config_text=config.to_text(),
        seed=config.seed,
        fingerprint=fingerprint,
    )
    if config.checkpoint:
        save_checkpoint(ckpt, config.checkpoint)
    if config.metrics:
        Path(config.metrics).write_text("".join(r.format() + "\n" for r in metrics))

    preds = _predictions(config.arch, best_params, x_val, config.routing_iterations)
    confusion = ConfusionMatrix.from_predictions(preds, y_val)
    return TrainResult(ckpt, metrics, best_acc, confusion)


def evaluate(
    ckpt: Checkpoint, data: ImageSet, expect_arch: str | None = None
) -> tuple[float, ConfusionMatrix]:
    """Accuracy and predicted-vs-actual counts on a validation set."""
    if data.variant != ckpt.variant:
        raise UsageError(
            f"checkpoint variant {ckpt.variant!r} does not match data variant {data.variant!r}"
        )
    params = model_from_checkpoint(ckpt, expect_arch)
    cfg = parse_config_text(ckpt.config_text)
    preds = _predictions(ckpt.arch, params, data.inputs(), cfg.routing_iterations)
    confusion = ConfusionMatrix.from_predictions(preds, data.labels)
    return confusion.accuracy(), confusion


# --- latency ---

@dataclass
class LatencyReport:
    preprocess_ms: dict[str, float]
    inference_ms: dict[str, float]
    total_ms: dict[str, float]
    budget_ms: float
    passed: bool

    def format(self) -> str:
        def fmt(name, st):
            return (
                f"{name:<11} min={st['min']:7.3f} ms  median={st['median']:7.3f} ms  "
                f"p99={st['p99']:7.3f} ms"
            )

        verdict = "PASS" if self.passed else "FAIL"
        return "\n".join(
            [
                fmt("preprocess", self.preprocess_ms),
                fmt("inference", self.inference_ms),
                fmt("total", self.total_ms),
                f"budget      median < {self.budget_ms:.0f} ms per measurement cycle: {verdict}",
            ]
        )


def _stats(samples_ms: list[float]) -> dict[str, float]:
    a = np.array(samples_ms)
    return {
        "min": float(a.min()),
        "median": float(np.median(a)),
        "p99": float(np.percentile(a, 99)),
    }


def bench_latency(
    ckpt: Checkpoint,
    n_warm: int = 10,
    n_measure: int = 100,
    cfg: SignalConfig = SignalConfig(),
    seed: int = 0,
    budget_ms: float = 30.0,
) -> LatencyReport:
    """Wall-clock per single measurement: DSP chain plus one network decision."""
    if n_measure < 1:
        raise ValueError(f"n_measure must be >= 1, got {n_measure}")
    if n_warm < 0:
        raise ValueError(f"n_warm must be >= 0, got {n_warm}")
    params = model_from_checkpoint(ckpt)
    run_cfg = parse_config_text(ckpt.config_text)
    filters = dsp.default_filters(cfg)
    traces = gen_dataset(4 * ((n_warm + n_measure) // 4 + 1), seed, cfg)

    pre_ms: list[float] = []
    inf_ms: list[float] = []
    tot_ms: list[float] = []
    for i, (trace, _) in enumerate(traces[: n_warm + n_measure]):
        t0 = time.perf_counter()
        img = dsp.preprocess(trace, cfg, filters)
        x = dsp.network_input(img if ckpt.variant == "complex" else dsp.magnitude_image(img))
        t1 = time.perf_counter()
        if ckpt.arch == "capsnet":
            capsnet.predict(params, x, run_cfg.routing_iterations)
        else:
            cnn.cnn_predict(params, x)
        t2 = time.perf_counter()
        if i >= n_warm:
            pre_ms.append((t1 - t0) * 1e3)
            inf_ms.append((t2 - t1) * 1e3)
            tot_ms.append((t2 - t0) * 1e3)
    total = _stats(tot_ms)
    return LatencyReport(
        preprocess_ms=_stats(pre_ms),
        inference_ms=_stats(inf_ms),
        total_ms=total,
        budget_ms=budget_ms,
        passed=total["median"] < budget_ms,
    )


# --- ablation ---

@dataclass
class AblationRow:
    arch: str
    variant: str
    accuracy: float
    inference_ms: float


def format_ablation_table(rows: list[AblationRow]) -> str:
    lines = [f"{'':<18}{'Validation Accuracy':>22}{'Prediction Time':>18}"]
    for r in rows:
        name = f"{r.variant.capitalize()} {r.arch.capitalize()}"
        lines.append(f"{name:<18}{r.accuracy * 100:>21.1f}%{r.inference_ms:>15.2f} ms")
    return "\n".join(lines)


def run_ablation(
    config: TrainConfig,
    dataset: ImageSet | None = None,
    archs: tuple = ARCHS,
    verbose: bool = False,
) -> list[AblationRow]:
    """Train complex and absolute variants from one config; report both."""
    if dataset is None:
        dataset = load_images(config.data)
    if dataset.variant != "complex":
        raise UsageError("ablation needs a complex dataset to derive the absolute variant")
    variants = {"complex": dataset, "absolute": to_absolute(dataset)}
    rows = []
    for arch in archs:
        for variant, data in variants.items():
            run_cfg = replace(config, arch=arch, variant=variant, checkpoint="", metrics="")
            result = run_training(run_cfg, dataset=data, verbose=verbose)
            params = model_from_checkpoint(result.checkpoint)
            x = data.inputs()[:32]
            t0 = time.perf_counter()
            reps = 3
            for _ in range(reps):
                _predictions(arch, params, x, config.routing_iterations)
            per_img_ms = (time.perf_counter() - t0) / (reps * x.shape[0]) * 1e3
            rows.append(AblationRow(arch, variant, result.best_accuracy, per_img_ms))
    return rows
