"""Training loops: denoiser (noise prediction), classifier (cross-entropy)
and the PGD adversarial-training baseline.

All loops are single-threaded and fully determined by (seed, config,
dataset); rerunning with the same inputs reproduces the final parameters
bit for bit in a fixed precision mode.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..autodiff import Tape, Tensor, cross_entropy, mse, resolve_dtype
from ..diffusion.schedule import NoiseSchedule
from ..errors import ConfigurationError, TrainingError
from .nets import ClassifierParams, DenoiserParams, classifier_forward, denoiser_forward


@dataclass(frozen=True)
class AdvTrainConfig:
    """Inner-maximizer settings for adversarial training."""

    iterations: int = 10
    eps: float = 8.0 / 255.0
    alpha: float = 2.0 / 255.0


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 64
    lr: float = 2e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    precision: str = "narrow"
    adversarial: AdvTrainConfig | None = None

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigurationError("epochs must be >= 1")
        if self.lr < 0 or self.batch_size < 1:
            raise ConfigurationError("learning rate must be >= 0 and batch size >= 1")


class Adam:
    """Adaptive-moment optimizer over a flat list of arrays."""

    def __init__(self, arrays, cfg: TrainConfig):
        self.lr = cfg.lr
        self.b1, self.b2, self.eps = cfg.beta1, cfg.beta2, cfg.adam_eps
        self.m = [np.zeros_like(a) for a in arrays]
        self.v = [np.zeros_like(a) for a in arrays]
        self.t = 0

    def step(self, arrays, grads):
        self.t += 1
        out = []
        for i, (a, g) in enumerate(zip(arrays, grads)):
            self.m[i] = self.b1 * self.m[i] + (1 - self.b1) * g
            self.v[i] = self.b2 * self.v[i] + (1 - self.b2) * g * g
            m_hat = self.m[i] / (1 - self.b1**self.t)
            v_hat = self.v[i] / (1 - self.b2**self.t)
            out.append(a - self.lr * m_hat / (np.sqrt(v_hat) + self.eps))
        return out


def _batches(n, batch_size, rng):
    order = rng.permutation(n)
    for i in range(0, n, batch_size):
        yield order[i : i + batch_size]


def _step_params(arrays, loss_builder, opt, dtype):
    """One optimizer step: watch params, build the loss, apply gradients."""
    tape = Tape()
    taped = [tape.watch(Tensor(a, dtype=dtype)) for a in arrays]
    loss = loss_builder(taped, tape)
    loss_val = float(loss.data)
    grads = tape.gradients(loss)
    grad_arrays = [
        grads[t.uid].data if t.uid in grads else np.zeros_like(t.data) for t in taped
    ]
    return opt.step(arrays, grad_arrays), loss_val


def train_denoiser(params: DenoiserParams, images: np.ndarray, schedule: NoiseSchedule,
                   cfg: TrainConfig) -> tuple[DenoiserParams, list[float]]:
    """Fit the noise predictor by minimizing E ||eps - eps_hat(x_t, t)||^2.

    Returns the trained params and the per-epoch mean loss curve.
    """
    if len(images) == 0:
        raise ConfigurationError("dataset is empty")
    dtype = resolve_dtype(cfg.precision)
    x0 = images.reshape(len(images), -1).astype(dtype)
    arrays = [a.astype(dtype) for a in params.arrays]
    opt = Adam(arrays, cfg)
    rng = np.random.default_rng(cfg.seed)
    curve = []
    for epoch in range(cfg.epochs):
        losses = []
        for idx in _batches(len(x0), cfg.batch_size, rng):
            xb = x0[idx]
            t = rng.integers(1, schedule.T + 1, size=len(idx))
            eps = rng.standard_normal(xb.shape).astype(dtype)
            a_bar = schedule.alphas_bar[t].astype(dtype)[:, None]
            x_t = np.sqrt(a_bar) * xb + np.sqrt(1.0 - a_bar) * eps

            def loss_builder(taped, tape, x_t=x_t, t=t, eps=eps):
                pred = denoiser_forward(params, Tensor(x_t), t, arrays=taped)
                return mse(pred, Tensor(eps))

            arrays, loss_val = _step_params(arrays, loss_builder, opt, dtype)
            losses.append(loss_val)
        epoch_mean = float(np.mean(losses))
        if not np.isfinite(epoch_mean):
            raise TrainingError(f"denoiser training diverged at epoch {epoch}")
        curve.append(epoch_mean)
    trained = DenoiserParams(params.image_dim, params.hidden, params.t_max, params.time_dim)
    trained.arrays = arrays
    return trained, curve


def pgd_perturb(params: ClassifierParams, arrays, x: np.ndarray, y: np.ndarray,
                adv: AdvTrainConfig, dtype) -> np.ndarray:
    """Inner maximizer for adversarial training: L-inf PGD on the classifier
    itself, started at the clean point.  With iterations=1 and alpha=eps this
    is exactly the FGSM sign step."""
    x_adv = x.copy()
    for _ in range(adv.iterations):
        tape = Tape()
        xt = tape.watch(Tensor(x_adv, dtype=dtype))
        loss = cross_entropy(classifier_forward(params, xt, arrays=arrays), y)
        g = tape.gradients(loss)[xt.uid].data
        x_adv = x_adv + adv.alpha * np.sign(g).astype(dtype)
        x_adv = np.clip(x_adv, x - adv.eps, x + adv.eps)
        x_adv = np.clip(x_adv, 0.0, 1.0).astype(dtype)
    return x_adv


def train_classifier(params: ClassifierParams, images: np.ndarray, labels: np.ndarray,
                     cfg: TrainConfig) -> tuple[ClassifierParams, list[float]]:
    """Supervised training; with cfg.adversarial set, each batch is replaced
    by its PGD perturbation against the current parameters."""
    if len(images) == 0:
        raise ConfigurationError("dataset is empty")
    dtype = resolve_dtype(cfg.precision)
    x0 = images.reshape(len(images), -1).astype(dtype)
    y0 = np.asarray(labels)
    arrays = [a.astype(dtype) for a in params.arrays]
    opt = Adam(arrays, cfg)
    rng = np.random.default_rng(cfg.seed)
    curve = []
    for epoch in range(cfg.epochs):
        losses = []
        for idx in _batches(len(x0), cfg.batch_size, rng):
            xb, yb = x0[idx], y0[idx]
            if cfg.adversarial is not None:
                xb = pgd_perturb(params, arrays, xb, yb, cfg.adversarial, dtype)

            def loss_builder(taped, tape, xb=xb, yb=yb):
                return cross_entropy(classifier_forward(params, Tensor(xb), arrays=taped), yb)

            arrays, loss_val = _step_params(arrays, loss_builder, opt, dtype)
            losses.append(loss_val)
        epoch_mean = float(np.mean(losses))
        if not np.isfinite(epoch_mean):
            raise TrainingError(f"classifier training diverged at epoch {epoch}")
        curve.append(epoch_mean)
    trained = ClassifierParams(params.image_dim, params.hidden, params.classes)
    trained.arrays = arrays
    return trained, curve


def adversarial_train(params: ClassifierParams, images: np.ndarray, labels: np.ndarray,
                      cfg: TrainConfig) -> tuple[ClassifierParams, list[float]]:
    """PGD adversarial training; requires cfg.adversarial."""
    if cfg.adversarial is None:
        raise ConfigurationError("adversarial_train requires an adversarial sub-config")
    return train_classifier(params, images, labels, cfg)


def classify(params: ClassifierParams, images: np.ndarray) -> np.ndarray:
    """Argmax labels for a batch of images (flattened internally)."""
    x = Tensor(images.reshape(len(images), -1).astype(params.arrays[0].dtype))
    logits = classifier_forward(params, x)
    return np.argmax(logits.data, axis=-1)


def accuracy(params: ClassifierParams, images: np.ndarray, labels: np.ndarray) -> float:
    return float(np.mean(classify(params, images) == np.asarray(labels)))
