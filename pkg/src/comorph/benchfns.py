"""Benchmark functions on the unit cube for optimizer validation.

All functions are maximized; each carries its analytic optimum.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import UnknownFunction


@dataclass(frozen=True)
class BenchFunction:
    name: str
    fn: Callable[[np.ndarray], float]
    optimum_point: float  # per-coordinate location of the maximum
    optimum_value: float


def _sphere(x: np.ndarray) -> float:
    return -float(np.sum((x - 0.7) ** 2))


def _rastrigin(x: np.ndarray) -> float:
    z = 10.24 * (x - 0.55)
    return -float(10.0 * x.size + np.sum(z * z - 10.0 * np.cos(2.0 * np.pi * z)))


def _step_plateau(x: np.ndarray) -> float:
    return -float(np.sum(np.floor(8.0 * np.abs(x - 0.6))) / 8.0)


REGISTRY: dict[str, BenchFunction] = {
    "sphere": BenchFunction("sphere", _sphere, 0.7, 0.0),
    "rastrigin": BenchFunction("rastrigin", _rastrigin, 0.55, 0.0),
    "step-plateau": BenchFunction("step-plateau", _step_plateau, 0.6, 0.0),
}


def get_function(name: str) -> BenchFunction:
    try:
        return REGISTRY[name]
    except KeyError:
        raise UnknownFunction(
            f"unknown test function {name!r}; choose from {sorted(REGISTRY)}"
        ) from None
