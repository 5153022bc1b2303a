"""Multi-channel, multi-kernel Lenia substrate with toroidal FFT convolution.

A grid state is an ndarray of shape (channels, height, width) with every
cell in [0, 1]. The update rule is standard Lenia: each kernel convolves
its source channel, a gaussian growth function maps the potential to
[-1, 1], and the weighted growth terms are accumulated into the target
channel, scaled by dt and clipped back to [0, 1].
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import List

import numpy as np
import scipy.fft as _fft


class DegenerateKernelError(ValueError):
    """Raised when a kernel discretizes to all zeros."""


@dataclass(frozen=True)
class GridConfig:
    """Fixed simulation lattice. Sides must be powers of two (FFT plan)."""

    height: int = 64
    width: int = 64
    channels: int = 1

    def __post_init__(self):
        for name in ("height", "width"):
            n = getattr(self, name)
            if n < 4 or (n & (n - 1)) != 0:
                raise ValueError(f"{name} must be a power of two >= 4, got {n}")
        if self.channels < 1:
            raise ValueError("channels must be >= 1")


@dataclass
class RingSpec:
    """One gaussian ring of a kernel shell."""

    height: float  # b in [0, 1]
    center: float  # a in [0, 1], position along the normalized radius
    width: float   # w in (0, 0.5]


@dataclass
class KernelSpec:
    """One convolution kernel plus its growth function and channel wiring."""

    radius_fraction: float
    rings: List[RingSpec]
    growth_mu: float
    growth_sigma: float
    weight: float
    source_channel: int = 0
    target_channel: int = 0


@dataclass
class Genome:
    """Lenia rule parameters plus the seed pattern placed at grid center."""

    kernels: List[KernelSpec]
    dt: float
    base_radius: int
    seed_pattern: np.ndarray  # (S, S, C), values in [0, 1]

    def validate(self, grid: GridConfig) -> None:
        if not 1 <= len(self.kernels) <= 16:
            raise ValueError(f"genome must have 1..16 kernels, got {len(self.kernels)}")
        if not 0.0 < self.dt <= 1.0:
            raise ValueError(f"dt must be in (0, 1], got {self.dt}")
        r_max = min(grid.height, grid.width) // 4
        if not 2 <= int(self.base_radius) <= r_max:
            raise ValueError(f"base_radius must be in [2, {r_max}], got {self.base_radius}")
        seed = np.asarray(self.seed_pattern)
        if seed.ndim != 3 or seed.shape[0] != seed.shape[1] or seed.shape[2] != grid.channels:
            raise ValueError(f"seed_pattern must be (S, S, {grid.channels}), got {seed.shape}")
        if seed.shape[0] > min(grid.height, grid.width) // 2:
            raise ValueError("seed_pattern side exceeds half the grid")
        if seed.min() < 0.0 or seed.max() > 1.0:
            raise ValueError("seed_pattern values must lie in [0, 1]")
        for i, k in enumerate(self.kernels):
            if not 0.0 < k.radius_fraction <= 1.0:
                raise ValueError(f"kernel {i}: radius_fraction must be in (0, 1]")
            if self.base_radius * k.radius_fraction < 1.0:
                raise ValueError(f"kernel {i}: support radius below one cell")
            if not k.rings:
                raise ValueError(f"kernel {i}: needs at least one ring")
            if not any(r.height > 0.0 for r in k.rings):
                raise DegenerateKernelError(f"kernel {i}: all ring heights are zero")
            for r in k.rings:
                if not 0.0 <= r.height <= 1.0:
                    raise ValueError(f"kernel {i}: ring height outside [0, 1]")
                if not 0.0 <= r.center <= 1.0:
                    raise ValueError(f"kernel {i}: ring center outside [0, 1]")
                if not 0.0 < r.width <= 0.5:
                    raise ValueError(f"kernel {i}: ring width outside (0, 0.5]")
            if k.growth_sigma <= 0.0:
                raise ValueError(f"kernel {i}: growth_sigma must be > 0")
            if not 0.0 <= k.weight <= 1.0:
                raise ValueError(f"kernel {i}: weight outside [0, 1]")
            if not 0 <= k.source_channel < grid.channels:
                raise ValueError(f"kernel {i}: source_channel out of range")
            if not 0 <= k.target_channel < grid.channels:
                raise ValueError(f"kernel {i}: target_channel out of range")

    def to_dict(self) -> dict:
        return {
            "dt": float(self.dt),
            "base_radius": int(self.base_radius),
            "kernels": [
                {
                    "radius_fraction": float(k.radius_fraction),
                    "rings": [
                        {"height": float(r.height), "center": float(r.center), "width": float(r.width)}
                        for r in k.rings
                    ],
                    "growth_mu": float(k.growth_mu),
                    "growth_sigma": float(k.growth_sigma),
                    "weight": float(k.weight),
                    "source_channel": int(k.source_channel),
                    "target_channel": int(k.target_channel),
                }
                for k in self.kernels
            ],
            "seed_pattern": np.asarray(self.seed_pattern, dtype=np.float64).tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Genome":
        extra = set(data) - {"dt", "base_radius", "kernels", "seed_pattern"}
        if extra:
            raise ValueError(f"unknown genome keys: {sorted(extra)}")
        kernels = []
        for kd in data["kernels"]:
            extra = set(kd) - {"radius_fraction", "rings", "growth_mu", "growth_sigma",
                               "weight", "source_channel", "target_channel"}
            if extra:
                raise ValueError(f"unknown kernel keys: {sorted(extra)}")
            kernels.append(KernelSpec(
                radius_fraction=float(kd["radius_fraction"]),
                rings=[RingSpec(float(r["height"]), float(r["center"]), float(r["width"]))
                       for r in kd["rings"]],
                growth_mu=float(kd["growth_mu"]),
                growth_sigma=float(kd["growth_sigma"]),
                weight=float(kd["weight"]),
                source_channel=int(kd["source_channel"]),
                target_channel=int(kd["target_channel"]),
            ))
        return cls(
            kernels=kernels,
            dt=float(data["dt"]),
            base_radius=int(data["base_radius"]),
            seed_pattern=np.asarray(data["seed_pattern"], dtype=np.float64),
        )

    @property
    def genome_id(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha1(blob.encode("utf-8")).hexdigest()[:12]


@dataclass
class Rollout:
    """Phenotype: the full frame sequence of one simulated genome."""

    frames: np.ndarray  # (T+1, C, H, W)
    genome_id: str

    @property
    def steps(self) -> int:
        return self.frames.shape[0] - 1


@dataclass(frozen=True)
class CompiledKernels:
    """Per-genome kernel spectra and growth parameters, immutable and shareable."""

    spatial: np.ndarray   # (K, H, W), each plane sums to 1, centered at the origin
    spectra: np.ndarray   # (K, H, W//2 + 1) complex
    growth_mu: np.ndarray
    growth_sigma: np.ndarray
    weight: np.ndarray
    source: np.ndarray    # (K,) int
    target: np.ndarray    # (K,) int
    # derived lookups for the step hot path
    unique_sources: np.ndarray
    source_slot: np.ndarray
    mu3: np.ndarray            # (K, 1, 1)
    neg_half_inv_var3: np.ndarray  # -1 / (2 sigma^2), shaped (K, 1, 1)


def _wrapped_offsets(height: int, width: int):
    dy = (np.arange(height) + height // 2) % height - height // 2
    dx = (np.arange(width) + width // 2) % width - width // 2
    return dy[:, None], dx[None, :]


def build_kernel(spec: KernelSpec, base_radius: int, height: int, width: int,
                 index: int = 0):
    """Discretize one ring kernel onto the torus and transform it.

    Returns (kernel, spectrum): the kernel is an (H, W) array centered at
    the origin (wrapping), normalized to unit sum; the spectrum is its
    rfft2, ready for circular convolution.
    """
    support = base_radius * spec.radius_fraction
    if support < 1.0:
        raise ValueError(f"kernel {index}: support radius {support:.3f} below one cell")
    dy, dx = _wrapped_offsets(height, width)
    dist = np.hypot(dy, dx)
    rho = dist / support
    kernel = np.zeros((height, width), dtype=np.float64)
    inside = dist <= support
    for ring in spec.rings:
        if ring.height == 0.0:
            continue
        kernel[inside] += ring.height * np.exp(
            -((rho[inside] - ring.center) ** 2) / (2.0 * ring.width**2))
    total = kernel.sum()
    if total <= 0.0:
        raise DegenerateKernelError(f"kernel {index}: all discretized values are zero")
    kernel /= total
    return kernel, _fft.rfft2(kernel)


def compile_genome(genome: Genome, grid: GridConfig) -> CompiledKernels:
    spatial, spectra = [], []
    for i, spec in enumerate(genome.kernels):
        k, f = build_kernel(spec, genome.base_radius, grid.height, grid.width, index=i)
        spatial.append(k)
        spectra.append(f)
    source = np.array([k.source_channel for k in genome.kernels], dtype=np.intp)
    sigma = np.array([k.growth_sigma for k in genome.kernels])
    mu = np.array([k.growth_mu for k in genome.kernels])
    unique_sources = np.unique(source)
    slot = {int(ch): i for i, ch in enumerate(unique_sources)}
    return CompiledKernels(
        spatial=np.stack(spatial),
        spectra=np.stack(spectra),
        growth_mu=mu,
        growth_sigma=sigma,
        weight=np.array([k.weight for k in genome.kernels]),
        source=source,
        target=np.array([k.target_channel for k in genome.kernels], dtype=np.intp),
        unique_sources=unique_sources,
        source_slot=np.array([slot[int(ch)] for ch in source], dtype=np.intp),
        mu3=mu[:, None, None].copy(),
        neg_half_inv_var3=(-0.5 / sigma**2)[:, None, None].copy(),
    )


def convolve(field: np.ndarray, spectrum: np.ndarray) -> np.ndarray:
    """Circular (toroidal) convolution of one channel with a kernel spectrum."""
    return _fft.irfft2(_fft.rfft2(field) * spectrum, s=field.shape)


def step(state: np.ndarray, genome: Genome, kernels: CompiledKernels) -> np.ndarray:
    """One Lenia update. Deterministic, toroidal, output clipped to [0, 1]."""
    c, h, w = state.shape
    ffts = _fft.rfft2(state[kernels.unique_sources])
    potentials = _fft.irfft2(kernels.spectra * ffts[kernels.source_slot], s=(h, w))
    # growth in place: 2 exp(-(u - mu)^2 / (2 sigma^2)) - 1
    g = potentials
    g -= kernels.mu3
    np.multiply(g, g, out=g)
    g *= kernels.neg_half_inv_var3
    np.exp(g, out=g)
    g *= 2.0
    g -= 1.0
    out = state.copy()
    for k in range(len(kernels.weight)):
        out[kernels.target[k]] += (genome.dt * kernels.weight[k]) * g[k]
    np.clip(out, 0.0, 1.0, out=out)
    return out


def initial_state(genome: Genome, grid: GridConfig) -> np.ndarray:
    """Zero grid with the seed pattern embedded at the center."""
    state = np.zeros((grid.channels, grid.height, grid.width), dtype=np.float64)
    seed = np.asarray(genome.seed_pattern, dtype=np.float64)
    s = seed.shape[0]
    top = grid.height // 2 - s // 2
    left = grid.width // 2 - s // 2
    for ch in range(grid.channels):
        state[ch, top:top + s, left:left + s] = seed[:, :, ch]
    return state


def simulate(genome: Genome, grid: GridConfig, steps: int,
             kernels: CompiledKernels | None = None) -> Rollout:
    """Roll a genome forward, returning all steps+1 frames."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    genome.validate(grid)
    if kernels is None:
        kernels = compile_genome(genome, grid)
    frames = np.empty((steps + 1, grid.channels, grid.height, grid.width), dtype=np.float64)
    frames[0] = initial_state(genome, grid)
    for t in range(steps):
        frames[t + 1] = step(frames[t], genome, kernels)
    return Rollout(frames=frames, genome_id=genome.genome_id)


def mass(state: np.ndarray) -> float:
    """Total cell value over all channels, normalized by cell count H*W."""
    c, h, w = state.shape
    return float(state.sum()) / (h * w)


def save_genome(path, genome: Genome) -> None:
    """Write a genome as JSON. Floats round-trip bit-exactly (repr encoding)."""
    with open(path, "w", encoding="utf-8") as f:
        json.dump(genome.to_dict(), f, indent=2)
        f.write("\n")


def load_genome(path) -> Genome:
    with open(path, "r", encoding="utf-8") as f:
        return Genome.from_dict(json.load(f))
