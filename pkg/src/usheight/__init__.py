"""Height classification of ultrasonic echoes.

Synthetic echo generation (`echosim`), complex-baseband conditioning and
image packing (`dsp`, `pngio`), from-scratch network numerics (`numerics`),
a capsule network with routing-by-agreement (`capsnet`), a CNN baseline
(`cnn`), and the training/evaluation harness plus CLI (`harness`, `cli`).
"""

__version__ = "0.1.0"

from .echosim import CLASS_NAMES, HeightClass, ScenarioSpec, SignalConfig  # noqa: F401
