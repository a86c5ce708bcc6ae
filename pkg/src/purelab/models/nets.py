"""The two learnable components: a time-conditioned noise predictor and a
classifier, both small MLPs over flattened images.

Architecture sizes here are artifact decisions; the methods being studied
assume a pretrained noise predictor and classifier, so any pair that
trains well on the toy data serves.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..autodiff import Tensor, concat, matmul, mul, sigmoid, tanh
from ..errors import ConfigurationError

TIME_EMBED_DIM = 32


def silu(x: Tensor) -> Tensor:
    return mul(x, sigmoid(x))


_ACTIVATIONS = {"tanh": tanh, "silu": silu}


def time_embedding(t, dim: int = TIME_EMBED_DIM, dtype=np.float32) -> np.ndarray:
    """Sinusoidal embedding with log-spaced frequencies; accepts scalar or
    per-sample timesteps (integer or fractional)."""
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    half = dim // 2
    freqs = np.exp(-np.log(10_000.0) * np.arange(half) / max(half - 1, 1))
    angles = t[:, None] * freqs[None, :]
    emb = np.concatenate([np.sin(angles), np.cos(angles)], axis=-1)
    return emb.astype(dtype)


def _init_layers(dims, rng: np.random.Generator, dtype) -> list[np.ndarray]:
    """Fan-in scaled uniform init, alternating [W0, b0, W1, b1, ...]."""
    arrays = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        arrays.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)).astype(dtype))
        arrays.append(np.zeros(fan_out, dtype=dtype))
    return arrays


def _mlp(arrays, x: Tensor, activation="tanh") -> Tensor:
    act = _ACTIVATIONS[activation]
    h = x
    n_layers = len(arrays) // 2
    for i in range(n_layers):
        w, b = arrays[2 * i], arrays[2 * i + 1]
        w = w if isinstance(w, Tensor) else Tensor(w)
        b = b if isinstance(b, Tensor) else Tensor(b)
        h = matmul(h, w) + b
        if i < n_layers - 1:
            h = act(h)
    return h


@dataclass
class DenoiserParams:
    """Noise-prediction MLP: [flat image | time embedding] -> predicted eps."""

    image_dim: int
    hidden: tuple[int, ...]
    t_max: int
    time_dim: int = TIME_EMBED_DIM
    activation: str = "silu"
    arrays: list[np.ndarray] = field(default_factory=list)

    @property
    def dims(self) -> tuple[int, ...]:
        return (self.image_dim + self.time_dim, *self.hidden, self.image_dim)

    @classmethod
    def init(cls, image_dim: int, hidden: tuple[int, ...], t_max: int, seed: int,
             dtype=np.float32, activation: str = "silu") -> "DenoiserParams":
        p = cls(image_dim=image_dim, hidden=tuple(hidden), t_max=t_max, activation=activation)
        p.arrays = _init_layers(p.dims, np.random.default_rng(seed), dtype)
        return p

    def astype(self, dtype) -> "DenoiserParams":
        out = DenoiserParams(self.image_dim, self.hidden, self.t_max, self.time_dim,
                             self.activation)
        out.arrays = [a.astype(dtype) for a in self.arrays]
        return out


@dataclass
class ClassifierParams:
    """Classifier MLP: flat image -> class logits."""

    image_dim: int
    hidden: tuple[int, ...]
    classes: int
    arrays: list[np.ndarray] = field(default_factory=list)

    @property
    def dims(self) -> tuple[int, ...]:
        return (self.image_dim, *self.hidden, self.classes)

    @classmethod
    def init(cls, image_dim: int, hidden: tuple[int, ...], classes: int, seed: int,
             dtype=np.float32) -> "ClassifierParams":
        p = cls(image_dim=image_dim, hidden=tuple(hidden), classes=classes)
        p.arrays = _init_layers(p.dims, np.random.default_rng(seed), dtype)
        return p

    def astype(self, dtype) -> "ClassifierParams":
        out = ClassifierParams(self.image_dim, self.hidden, self.classes)
        out.arrays = [a.astype(dtype) for a in self.arrays]
        return out


def denoiser_forward(params: DenoiserParams, x: Tensor, t, arrays=None) -> Tensor:
    """Predicted noise for x at timestep t (scalar or per-sample array).

    t may be fractional (the ODE pathway evaluates between grid points);
    it must stay within [0, t_max].
    """
    tv = np.atleast_1d(np.asarray(t, dtype=np.float64))
    if np.any(tv < 0) or np.any(tv > params.t_max):
        raise ConfigurationError(f"timestep {t} outside [0, {params.t_max}]")
    if x.data.ndim != 2 or x.shape[1] != params.image_dim:
        raise ConfigurationError(f"expected [B, {params.image_dim}] input, got {x.shape}")
    if tv.size == 1:
        tv = np.full(x.shape[0], tv[0])
    emb = Tensor(time_embedding(tv, params.time_dim, dtype=x.data.dtype))
    h = concat([x, emb])
    return _mlp(arrays if arrays is not None else params.arrays, h, params.activation)


def classifier_forward(params: ClassifierParams, x: Tensor, arrays=None) -> Tensor:
    """Class logits for a batch of flattened images."""
    if x.data.ndim != 2 or x.shape[1] != params.image_dim:
        raise ConfigurationError(f"expected [B, {params.image_dim}] input, got {x.shape}")
    return _mlp(arrays if arrays is not None else params.arrays, x)


def make_eps_model(params: DenoiserParams):
    """Bind params into the eps_model(x, t) callable samplers expect."""

    def eps_model(x: Tensor, t) -> Tensor:
        return denoiser_forward(params, x, t)

    return eps_model
