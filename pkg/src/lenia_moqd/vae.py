"""Unsupervised latent descriptor space.

A small variational autoencoder (flattened pooled frame -> tanh hidden ->
gaussian latent -> tanh hidden -> linear reconstruction) trained online on
phenotype frames. Forward and backward passes are written out explicitly
so gradients can be checked against finite differences.

Parameters are a dict of float64 arrays keyed by PARAM_KEYS. The mu head
is the deterministic descriptor; sampling happens only inside training.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Dict

import numpy as np

PARAM_KEYS = ("w_enc", "b_enc", "w_mu", "b_mu", "w_logvar", "b_logvar",
              "w_dec", "b_dec", "w_out", "b_out")

Params = Dict[str, np.ndarray]


class NumericsError(RuntimeError):
    """Non-finite values encountered in the encoder/decoder."""


@dataclass(frozen=True)
class VaeConfig:
    input_dim: int
    hidden_dim: int = 256
    latent_dim: int = 8
    beta: float = 0.1


@dataclass
class LatentTrace:
    """Latent encodings of sampled rollout frames."""

    encodings: np.ndarray      # (n, L)
    frame_indices: np.ndarray  # (n,) int

    @property
    def mean(self) -> np.ndarray:
        return self.encodings.mean(axis=0)


def init_params(config: VaeConfig, rng: np.random.Generator) -> Params:
    """Gaussian init scaled by 1/sqrt(fan_in); biases zero."""
    d, h, l = config.input_dim, config.hidden_dim, config.latent_dim

    def layer(n_in, n_out):
        return rng.normal(0.0, 1.0 / np.sqrt(n_in), size=(n_in, n_out))

    return {
        "w_enc": layer(d, h), "b_enc": np.zeros(h),
        "w_mu": layer(h, l), "b_mu": np.zeros(l),
        "w_logvar": layer(h, l), "b_logvar": np.zeros(l),
        "w_dec": layer(l, h), "b_dec": np.zeros(h),
        "w_out": layer(h, d), "b_out": np.zeros(d),
    }


def zero_params_like(params: Params) -> Params:
    return {k: np.zeros_like(v) for k, v in params.items()}


def check_finite(params: Params) -> None:
    for k, v in params.items():
        if not np.all(np.isfinite(v)):
            raise NumericsError(f"non-finite values in parameter {k!r}")


def pool_frame(frame: np.ndarray, size: int) -> np.ndarray:
    """Average-pool each channel of a (C, H, W) frame to size x size, flatten channel-major."""
    c, h, w = frame.shape
    if h % size or w % size:
        raise ValueError(f"grid {h}x{w} not divisible by downsample size {size}")
    fh, fw = h // size, w // size
    pooled = frame.reshape(c, size, fh, size, fw).mean(axis=(2, 4))
    return pooled.ravel()


def encode_batch(x: np.ndarray, params: Params) -> np.ndarray:
    """Deterministic mu-head encodings for a (B, input_dim) batch."""
    h = np.tanh(x @ params["w_enc"] + params["b_enc"])
    mu = h @ params["w_mu"] + params["b_mu"]
    if not np.all(np.isfinite(mu)):
        raise NumericsError("non-finite encoder activations")
    return mu


def encode(frame: np.ndarray, params: Params, downsample: int = 32) -> np.ndarray:
    """Encode one grid frame to its latent descriptor (mu head, no sampling)."""
    return encode_batch(pool_frame(frame, downsample)[None, :], params)[0]


def loss_and_grads(params: Params, x: np.ndarray, eps: np.ndarray, beta: float):
    """VAE loss and analytic gradients for a batch.

    Reconstruction is the batch mean of per-sample summed squared error;
    the KL term against N(0, I) is the batch mean of the per-sample sum
    over latent dimensions. Returns (loss, grads, parts).
    """
    b = x.shape[0]
    h_pre = x @ params["w_enc"] + params["b_enc"]
    h = np.tanh(h_pre)
    mu = h @ params["w_mu"] + params["b_mu"]
    logvar = h @ params["w_logvar"] + params["b_logvar"]
    std = np.exp(0.5 * logvar)
    z = mu + std * eps
    d_pre = z @ params["w_dec"] + params["b_dec"]
    d = np.tanh(d_pre)
    recon = d @ params["w_out"] + params["b_out"]

    err = recon - x
    recon_loss = float((err**2).sum() / b)
    kl = float((-0.5 * (1.0 + logvar - mu**2 - np.exp(logvar))).sum() / b)
    loss = recon_loss + beta * kl

    # backward
    g_recon = 2.0 * err / b
    grads = {
        "w_out": d.T @ g_recon,
        "b_out": g_recon.sum(axis=0),
    }
    g_d = (g_recon @ params["w_out"].T) * (1.0 - d**2)
    grads["w_dec"] = z.T @ g_d
    grads["b_dec"] = g_d.sum(axis=0)
    g_z = g_d @ params["w_dec"].T
    g_mu = g_z + (beta / b) * mu
    g_logvar = g_z * eps * 0.5 * std + (beta / b) * 0.5 * (np.exp(logvar) - 1.0)
    grads["w_mu"] = h.T @ g_mu
    grads["b_mu"] = g_mu.sum(axis=0)
    grads["w_logvar"] = h.T @ g_logvar
    grads["b_logvar"] = g_logvar.sum(axis=0)
    g_h = (g_mu @ params["w_mu"].T + g_logvar @ params["w_logvar"].T) * (1.0 - h**2)
    grads["w_enc"] = x.T @ g_h
    grads["b_enc"] = g_h.sum(axis=0)

    parts = {"recon": recon_loss, "kl": kl}
    return loss, grads, parts


def loss_value(params: Params, x: np.ndarray, eps: np.ndarray, beta: float) -> float:
    return loss_and_grads(params, x, eps, beta)[0]


class VaeTrainer:
    """Plain SGD with momentum over the VAE parameters.

    Owns the training RNG (reparameterization noise and minibatch order),
    so a fixed seed makes every train_step reproducible.
    """

    def __init__(self, config: VaeConfig, seed: int, lr: float = 1e-3,
                 momentum: float = 0.9):
        if lr <= 0:
            raise ValueError("lr must be > 0")
        self.config = config
        self.seed = int(seed)
        self.lr = lr
        self.momentum = momentum
        self.rng = np.random.default_rng(np.random.SeedSequence([0x5AE, self.seed]))
        self.params = init_params(config, self.rng)
        self.velocity = zero_params_like(self.params)
        self.last_loss = float("nan")

    def train_step(self, batch: np.ndarray) -> float:
        """One SGD step on a (B, input_dim) batch; returns the loss."""
        if batch.ndim != 2 or batch.shape[0] == 0:
            raise ValueError("batch must be a nonempty (B, input_dim) array")
        eps = self.rng.standard_normal(size=(batch.shape[0], self.config.latent_dim))
        loss, grads, _ = loss_and_grads(self.params, batch, eps, self.config.beta)
        if not np.isfinite(loss):
            raise NumericsError(f"non-finite training loss {loss}")
        for k in PARAM_KEYS:
            v = self.velocity[k]
            v *= self.momentum
            v -= self.lr * grads[k]
            self.params[k] += v
        check_finite(self.params)
        self.last_loss = loss
        return loss

    def train_steps(self, pool: np.ndarray, steps: int, batch_size: int = 32) -> float:
        """Fixed number of steps over random minibatches drawn from pool."""
        n = pool.shape[0]
        loss = self.last_loss
        for _ in range(steps):
            idx = self.rng.integers(0, n, size=min(batch_size, n))
            loss = self.train_step(pool[idx])
        return loss

    def train_epochs(self, pool: np.ndarray, epochs: int, batch_size: int = 32) -> float:
        """Shuffled full passes over pool."""
        loss = self.last_loss
        for _ in range(epochs):
            order = self.rng.permutation(pool.shape[0])
            for start in range(0, len(order), batch_size):
                loss = self.train_step(pool[order[start:start + batch_size]])
        return loss


def refresh(repertoire, trainer: VaeTrainer, epochs: int) -> float:
    """AURORA-style refresh: retrain on archived final frames, re-encode everything.

    Every member's descriptor and latent trace are re-encoded with the new
    parameters (from the pooled inputs cached on the member) and the archive
    statistics are recomputed. epochs=0 skips training but still re-encodes.
    """
    members = repertoire.members
    if not members:
        raise ValueError("refresh requires a nonempty repertoire")
    loss = trainer.last_loss
    if epochs > 0:
        pool = np.stack([m.pooled_final for m in members])
        loss = trainer.train_epochs(pool, epochs)
    for m in members:
        m.descriptor = encode_batch(m.pooled_final[None, :], trainer.params)[0]
        m.trace.encodings = encode_batch(m.pooled_trace, trainer.params)
    repertoire.recompute_stats()
    return loss


def save_encoder(path_bin, path_meta, params: Params, config: VaeConfig, seed: int) -> None:
    """Raw little-endian float32 parameter blob plus a JSON shape sidecar."""
    with open(path_bin, "wb") as f:
        for k in PARAM_KEYS:
            f.write(np.ascontiguousarray(params[k], dtype="<f4").tobytes())
    meta = {
        "order": list(PARAM_KEYS),
        "shapes": {k: list(params[k].shape) for k in PARAM_KEYS},
        "input_dim": config.input_dim,
        "hidden_dim": config.hidden_dim,
        "latent_dim": config.latent_dim,
        "beta": config.beta,
        "rng_seed": seed,
    }
    with open(path_meta, "w", encoding="utf-8") as f:
        json.dump(meta, f, indent=2)
        f.write("\n")


def load_encoder(path_bin, path_meta):
    """Returns (params, config, seed) from a checkpoint pair."""
    with open(path_meta, "r", encoding="utf-8") as f:
        meta = json.load(f)
    raw = np.fromfile(path_bin, dtype="<f4")
    params = {}
    offset = 0
    for k in meta["order"]:
        shape = tuple(meta["shapes"][k])
        n = int(np.prod(shape))
        params[k] = raw[offset:offset + n].astype(np.float64).reshape(shape)
        offset += n
    if offset != raw.size:
        raise ValueError("encoder blob size mismatch with sidecar shapes")
    config = VaeConfig(input_dim=meta["input_dim"], hidden_dim=meta["hidden_dim"],
                       latent_dim=meta["latent_dim"], beta=meta["beta"])
    return params, config, meta["rng_seed"]
