"""Architecture search space for classification heads.

A :class:`HeadConfig` picks a pooling mode, whether the base encoder stays
frozen, an MLP, and optional convolution and attention stacks. Configs
serialize to JSON with conditional sub-fields absent when their parent
switch is off, and encode to a fixed 12-dimensional unit-interval vector
for the density-model sampler.

Vector layout (index: field):
  0 pooling   1 freeze_base   2 mlp.layers   3 mlp.hidden
  4 conv.enabled  5 conv.heads  6 conv.kernel  7 conv.layers  8 conv.skip
  9 encoder.enabled  10 encoder.heads  11 encoder.layers

Categoricals map to bin centers ((i + 0.5) / k), booleans to 0.25/0.75,
integers linearly over their range. Inactive dimensions sit at 0.5.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

POOLINGS = ("max", "mean", "cls")

MLP_LAYERS = (1, 5)
HIDDEN = (5, 200)
CONV_HEADS = (5, 200)
KERNELS = (3, 5, 7, 9, 11)
CONV_LAYERS = (1, 5)
ENC_HEADS = (1, 16)
ENC_LAYERS = (1, 5)

# Width parameters are counted in this many bins; encoding stays linear.
WIDTH_BINS = 10

VECTOR_DIM = 12

DEFAULT_BASE_DIM = 32


@dataclass(frozen=True)
class MlpSpec:
    layers: int
    hidden: Optional[int] = None  # absent when layers == 1


@dataclass(frozen=True)
class ConvSpec:
    enabled: bool = False
    heads: Optional[int] = None
    kernel: Optional[int] = None
    layers: Optional[int] = None
    skip: Optional[bool] = None


@dataclass(frozen=True)
class EncoderSpec:
    enabled: bool = False
    heads: Optional[int] = None
    layers: Optional[int] = None


@dataclass(frozen=True)
class HeadConfig:
    pooling: str
    freeze_base: bool
    mlp: MlpSpec
    conv: ConvSpec
    encoder: EncoderSpec


@dataclass(frozen=True)
class ConfigVector:
    values: np.ndarray
    active: np.ndarray

    def __post_init__(self):
        if self.values.shape != (VECTOR_DIM,) or self.active.shape != (VECTOR_DIM,):
            raise ValueError(f"ConfigVector needs {VECTOR_DIM} dims, got "
                             f"{self.values.shape} / {self.active.shape}")


def baseline_config() -> HeadConfig:
    """Single dense layer on [CLS] pooling over the unfrozen base."""
    return HeadConfig(pooling="cls", freeze_base=False, mlp=MlpSpec(layers=1),
                      conv=ConvSpec(), encoder=EncoderSpec())


def effective_dim(config: HeadConfig, base_dim: int) -> int:
    """Channel count seen by the attention stack and by pooling."""
    if config.conv.enabled and config.conv.heads is not None:
        return config.conv.heads
    return base_dim


# ---------------------------------------------------------------------------
# validation


def _in_range(name, value, lo, hi, out):
    if value is None:
        out.append(f"{name}: required field is missing")
    elif not lo <= value <= hi:
        out.append(f"{name}: {value} outside [{lo}, {hi}]")


def _absent(name, value, out):
    if value is not None:
        out.append(f"{name}: set although its switch is off")


def _check_ranges(config: HeadConfig) -> list[str]:
    v: list[str] = []
    if config.pooling not in POOLINGS:
        v.append(f"pooling: {config.pooling!r} not one of {POOLINGS}")
    _in_range("mlp.layers", config.mlp.layers, *MLP_LAYERS, v)
    if config.mlp.layers == 1:
        _absent("mlp.hidden", config.mlp.hidden, v)
    else:
        _in_range("mlp.hidden", config.mlp.hidden, *HIDDEN, v)
    c = config.conv
    if c.enabled:
        _in_range("conv.heads", c.heads, *CONV_HEADS, v)
        if c.kernel not in KERNELS:
            v.append(f"conv.kernel: {c.kernel} not in {KERNELS}")
        _in_range("conv.layers", c.layers, *CONV_LAYERS, v)
        if c.skip is None:
            v.append("conv.skip: required field is missing")
    else:
        for name in ("heads", "kernel", "layers", "skip"):
            _absent(f"conv.{name}", getattr(c, name), v)
    e = config.encoder
    if e.enabled:
        _in_range("encoder.heads", e.heads, *ENC_HEADS, v)
        _in_range("encoder.layers", e.layers, *ENC_LAYERS, v)
    else:
        _absent("encoder.heads", e.heads, v)
        _absent("encoder.layers", e.layers, v)
    return v


def validate(config: HeadConfig, base_dim: int) -> list[str]:
    """Return the list of violated constraints; empty means ok.

    Besides range checks, the attention head count must evenly divide the
    channel dimension the attention stack runs at (the conv channel count
    when convolutions are on, otherwise ``base_dim``).
    """
    if base_dim <= 0:
        raise ValueError(f"base_dim must be positive, got {base_dim}")
    v = _check_ranges(config)
    e = config.encoder
    if e.enabled and e.heads is not None:
        dim = effective_dim(config, base_dim)
        if e.heads > 0 and dim % e.heads != 0:
            v.append(f"encoder.heads: {e.heads} does not divide model dim {dim}")
    return v


def _divisor_heads(dim: int) -> list[int]:
    lo, hi = ENC_HEADS
    return [h for h in range(lo, hi + 1) if dim % h == 0]


def with_divisible_heads(config: HeadConfig, base_dim: int) -> HeadConfig:
    """Minimal adjustment so the attention head count divides the model dim.

    With convolutions on, the conv channel count snaps to the nearest
    multiple of the head count inside its range (ties go up); otherwise the
    head count snaps to the nearest divisor of ``base_dim``. Configs that
    already validate come back unchanged.
    """
    e = config.encoder
    if not e.enabled or e.heads is None:
        return config
    dim = effective_dim(config, base_dim)
    if dim % e.heads == 0:
        return config
    if config.conv.enabled and config.conv.heads is not None:
        h = e.heads
        lo, hi = CONV_HEADS
        candidates = [m for m in range(lo + (-lo) % h, hi + 1, h)]
        if candidates:
            best = min(candidates, key=lambda m: (abs(m - dim), -m))
            return HeadConfig(config.pooling, config.freeze_base, config.mlp,
                              ConvSpec(True, best, config.conv.kernel,
                                       config.conv.layers, config.conv.skip),
                              config.encoder)
        dim = base_dim  # no multiple fits; fall through to adjusting heads
    best_h = min(_divisor_heads(dim), key=lambda h: (abs(h - e.heads), -h))
    return HeadConfig(config.pooling, config.freeze_base, config.mlp, config.conv,
                      EncoderSpec(True, best_h, e.layers))


# ---------------------------------------------------------------------------
# sampling


def sample_uniform(rng: np.random.Generator, base_dim: int = DEFAULT_BASE_DIM) -> HeadConfig:
    """Draw a valid config uniformly over the listed options.

    Conditional sub-fields are drawn only when their switch comes up true.
    Attention head counts are drawn from the divisors of the dimension the
    stack will run at, so every sample validates against ``base_dim``.
    """
    pooling = POOLINGS[rng.integers(len(POOLINGS))]
    freeze = bool(rng.integers(2))
    layers = int(rng.integers(MLP_LAYERS[0], MLP_LAYERS[1] + 1))
    hidden = int(rng.integers(HIDDEN[0], HIDDEN[1] + 1)) if layers > 1 else None
    mlp = MlpSpec(layers, hidden)

    if rng.integers(2):
        conv = ConvSpec(True,
                        heads=int(rng.integers(CONV_HEADS[0], CONV_HEADS[1] + 1)),
                        kernel=int(rng.choice(KERNELS)),
                        layers=int(rng.integers(CONV_LAYERS[0], CONV_LAYERS[1] + 1)),
                        skip=bool(rng.integers(2)))
    else:
        conv = ConvSpec()

    if rng.integers(2):
        dim = conv.heads if conv.enabled else base_dim
        enc = EncoderSpec(True,
                          heads=int(rng.choice(_divisor_heads(dim))),
                          layers=int(rng.integers(ENC_LAYERS[0], ENC_LAYERS[1] + 1)))
    else:
        enc = EncoderSpec()

    return HeadConfig(pooling, freeze, mlp, conv, enc)


# ---------------------------------------------------------------------------
# vector encoding


def _lin(value, lo, hi) -> float:
    return (value - lo) / (hi - lo)


def _unlin(v, lo, hi) -> int:
    return int(np.clip(round(lo + v * (hi - lo)), lo, hi))


def _bool_enc(b: bool) -> float:
    return 0.75 if b else 0.25


def encode(config: HeadConfig) -> ConfigVector:
    """Map a valid config onto [0,1]^12 with an active-dimension mask."""
    bad = _check_ranges(config)
    if bad:
        raise ValueError(f"encode: invalid config: {'; '.join(bad)}")
    values = np.full(VECTOR_DIM, 0.5)
    active = np.zeros(VECTOR_DIM, dtype=bool)

    def put(i, v):
        values[i] = v
        active[i] = True

    put(0, (POOLINGS.index(config.pooling) + 0.5) / len(POOLINGS))
    put(1, _bool_enc(config.freeze_base))
    put(2, _lin(config.mlp.layers, *MLP_LAYERS))
    if config.mlp.layers > 1:
        put(3, _lin(config.mlp.hidden, *HIDDEN))
    put(4, _bool_enc(config.conv.enabled))
    if config.conv.enabled:
        put(5, _lin(config.conv.heads, *CONV_HEADS))
        put(6, _lin(config.conv.kernel, KERNELS[0], KERNELS[-1]))
        put(7, _lin(config.conv.layers, *CONV_LAYERS))
        put(8, _bool_enc(config.conv.skip))
    put(9, _bool_enc(config.encoder.enabled))
    if config.encoder.enabled:
        put(10, _lin(config.encoder.heads, *ENC_HEADS))
        put(11, _lin(config.encoder.layers, *ENC_LAYERS))
    return ConfigVector(values, active)


def decode(vector) -> HeadConfig:
    """Inverse of :func:`encode`; integers round to the nearest in-range value.

    Accepts a :class:`ConfigVector` or a bare length-12 array. Activity is
    read off the switch dimensions, so any point of the unit cube decodes.
    The kernel width rounds to the nearest odd value in its range.
    """
    values = vector.values if isinstance(vector, ConfigVector) else np.asarray(vector, dtype=np.float64)
    if values.shape != (VECTOR_DIM,):
        raise ValueError(f"decode: expected {VECTOR_DIM} values, got {values.shape}")
    if (values < 0).any() or (values > 1).any():
        raise ValueError("decode: values outside [0, 1]")

    pooling = POOLINGS[min(int(values[0] * len(POOLINGS)), len(POOLINGS) - 1)]
    freeze = values[1] >= 0.5
    layers = _unlin(values[2], *MLP_LAYERS)
    mlp = MlpSpec(layers, _unlin(values[3], *HIDDEN) if layers > 1 else None)

    if values[4] >= 0.5:
        kernel = KERNELS[0] + 2 * int(np.clip(
            round(values[6] * (KERNELS[-1] - KERNELS[0]) / 2), 0, len(KERNELS) - 1))
        conv = ConvSpec(True,
                        heads=_unlin(values[5], *CONV_HEADS),
                        kernel=kernel,
                        layers=_unlin(values[7], *CONV_LAYERS),
                        skip=bool(values[8] >= 0.5))
    else:
        conv = ConvSpec()

    if values[9] >= 0.5:
        enc = EncoderSpec(True, heads=_unlin(values[10], *ENC_HEADS),
                          layers=_unlin(values[11], *ENC_LAYERS))
    else:
        enc = EncoderSpec()

    return HeadConfig(pooling, bool(freeze), mlp, conv, enc)


def cardinality() -> int:
    """Size of the discretized space under this artifact's counting convention.

    Width parameters (mlp.hidden, conv.heads) count as WIDTH_BINS options;
    the hidden width multiplies every MLP depth; disabled conv and attention
    stacks count as one option each.
    """
    mlp = (MLP_LAYERS[1] - MLP_LAYERS[0] + 1) * WIDTH_BINS
    conv = 1 + (WIDTH_BINS * len(KERNELS)
                * (CONV_LAYERS[1] - CONV_LAYERS[0] + 1) * 2)
    enc = 1 + (ENC_HEADS[1] - ENC_HEADS[0] + 1) * (ENC_LAYERS[1] - ENC_LAYERS[0] + 1)
    return len(POOLINGS) * 2 * mlp * conv * enc


# ---------------------------------------------------------------------------
# JSON


def to_dict(config: HeadConfig) -> dict:
    d = {"pooling": config.pooling, "freeze_base": config.freeze_base,
         "mlp": {"layers": config.mlp.layers}}
    if config.mlp.layers != 1 and config.mlp.hidden is not None:
        d["mlp"]["hidden"] = config.mlp.hidden
    c = config.conv
    d["conv"] = {"enabled": c.enabled}
    if c.enabled:
        d["conv"].update(heads=c.heads, kernel=c.kernel, layers=c.layers, skip=c.skip)
    e = config.encoder
    d["encoder"] = {"enabled": e.enabled}
    if e.enabled:
        d["encoder"].update(heads=e.heads, layers=e.layers)
    return d


def from_dict(d: dict) -> HeadConfig:
    mlp = d.get("mlp", {})
    conv = d.get("conv", {})
    enc = d.get("encoder", {})
    return HeadConfig(
        pooling=d["pooling"],
        freeze_base=bool(d["freeze_base"]),
        mlp=MlpSpec(layers=int(mlp["layers"]),
                    hidden=None if mlp.get("hidden") is None else int(mlp["hidden"])),
        conv=ConvSpec(enabled=bool(conv.get("enabled", False)),
                      heads=conv.get("heads"), kernel=conv.get("kernel"),
                      layers=conv.get("layers"), skip=conv.get("skip")),
        encoder=EncoderSpec(enabled=bool(enc.get("enabled", False)),
                            heads=enc.get("heads"), layers=enc.get("layers")),
    )


def to_json(config: HeadConfig) -> str:
    return json.dumps(to_dict(config))


def from_json(text: str) -> HeadConfig:
    return from_dict(json.loads(text))


def describe(config: HeadConfig) -> str:
    """Compact one-line descriptor for logs."""
    parts = [config.pooling, "frozen" if config.freeze_base else "unfrozen"]
    if config.mlp.layers == 1:
        parts.append("mlp1")
    else:
        parts.append(f"mlp{config.mlp.layers}x{config.mlp.hidden}")
    if config.conv.enabled:
        c = config.conv
        parts.append(f"conv{c.layers}x{c.heads}k{c.kernel}{'s' if c.skip else ''}")
    if config.encoder.enabled:
        parts.append(f"att{config.encoder.layers}x{config.encoder.heads}")
    return "|".join(parts)
