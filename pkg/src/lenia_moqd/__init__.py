"""Intrinsic multi-objective evolution of Lenia continuous cellular automata."""

__version__ = "0.1.0"

from .core import (
    CompiledKernels,
    DegenerateKernelError,
    Genome,
    GridConfig,
    KernelSpec,
    RingSpec,
    Rollout,
    build_kernel,
    compile_genome,
    convolve,
    initial_state,
    load_genome,
    mass,
    save_genome,
    simulate,
    step,
)

__all__ = [
    "CompiledKernels",
    "DegenerateKernelError",
    "Genome",
    "GridConfig",
    "KernelSpec",
    "RingSpec",
    "Rollout",
    "build_kernel",
    "compile_genome",
    "convolve",
    "initial_state",
    "load_genome",
    "mass",
    "save_genome",
    "simulate",
    "step",
    "__version__",
]
