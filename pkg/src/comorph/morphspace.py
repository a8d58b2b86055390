"""Bounded, symmetry-tied morphology parameter space.

A design space is an ordered list of per-link scale-factor dimensions.
Dimensions sharing a symmetry group (e.g. left/right limb pairs) are tied to
one free coordinate, and every optimizer works in the unit cube of free
coordinates; physical factors are reconstructed at evaluation time.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import yaml

from .errors import DimensionMismatch, InvalidBounds, MalformedSpec

CATEGORIES = (
    "mesh_scale_x",
    "mesh_scale_y",
    "mesh_scale_z",
    "mass_scale",
    "joint_stiffness_scale",
    "joint_damping_scale",
)


@dataclass(frozen=True)
class DimensionSpec:
    """One physical scale factor: a (link, category) pair with bounds."""

    link_name: str
    category: str
    lower: float
    upper: float
    symmetry_group: str | None = None

    def __post_init__(self):
        if self.category not in CATEGORIES:
            raise MalformedSpec(f"unknown category {self.category!r}")
        if not (self.lower > 0.0):
            raise InvalidBounds(
                f"{self.name}: lower bound must be positive, got {self.lower}"
            )
        if not (self.lower < self.upper):
            raise InvalidBounds(
                f"{self.name}: lower {self.lower} must be < upper {self.upper}"
            )

    @property
    def name(self) -> str:
        return f"{self.link_name}.{self.category}"


@dataclass(frozen=True)
class DesignSpace:
    """Ordered dimension list plus the symmetry-group structure.

    ``rep_of_dim[d]`` maps each physical dimension to its free-coordinate
    index; ``rep_dims`` lists one representative physical dimension per free
    coordinate, in order of first occurrence.
    """

    dims: tuple[DimensionSpec, ...]
    rep_of_dim: tuple[int, ...] = field(repr=False)
    rep_dims: tuple[int, ...] = field(repr=False)

    @property
    def free_dim_count(self) -> int:
        return len(self.rep_dims)

    @property
    def link_names(self) -> tuple[str, ...]:
        seen: dict[str, None] = {}
        for d in self.dims:
            seen.setdefault(d.link_name, None)
        return tuple(seen)

    def index_of(self, link_name: str, category: str) -> int:
        key = f"{link_name}.{category}"
        for i, d in enumerate(self.dims):
            if d.name == key:
                return i
        raise KeyError(key)

    def lower_bounds(self) -> np.ndarray:
        return np.array([d.lower for d in self.dims])

    def upper_bounds(self) -> np.ndarray:
        return np.array([d.upper for d in self.dims])


def make_space(dims: Iterable[DimensionSpec]) -> DesignSpace:
    """Assemble a DesignSpace, validating names and symmetry groups."""
    dims = tuple(dims)
    seen: set[str] = set()
    for d in dims:
        if d.name in seen:
            raise MalformedSpec(f"duplicate dimension {d.name!r}")
        seen.add(d.name)

    group_rep: dict[str, int] = {}
    rep_of_dim: list[int] = []
    rep_dims: list[int] = []
    for i, d in enumerate(dims):
        if d.symmetry_group is None:
            rep_of_dim.append(len(rep_dims))
            rep_dims.append(i)
            continue
        if d.symmetry_group in group_rep:
            rep = group_rep[d.symmetry_group]
            leader = dims[rep_dims[rep]]
            if (d.category, d.lower, d.upper) != (
                leader.category,
                leader.lower,
                leader.upper,
            ):
                raise MalformedSpec(
                    f"group {d.symmetry_group!r}: members must share category "
                    f"and bounds ({d.name} vs {leader.name})"
                )
            rep_of_dim.append(rep)
        else:
            group_rep[d.symmetry_group] = len(rep_dims)
            rep_of_dim.append(len(rep_dims))
            rep_dims.append(i)
    return DesignSpace(dims=dims, rep_of_dim=tuple(rep_of_dim), rep_dims=tuple(rep_dims))


def build_space(text: str) -> DesignSpace:
    """Parse a design-space spec document (YAML) into a DesignSpace.

    Expected shape::

        dimensions:
          - {link: left_thigh, category: mass_scale, lower: 0.5, upper: 2.0,
             group: thigh.mass_scale}
    """
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise MalformedSpec(f"not valid YAML: {exc}") from exc
    if not isinstance(doc, dict) or "dimensions" not in doc:
        raise MalformedSpec("spec must be a mapping with a 'dimensions' list")
    records = doc["dimensions"]
    if not isinstance(records, list) or not records:
        raise MalformedSpec("'dimensions' must be a non-empty list")
    dims = []
    for rec in records:
        if not isinstance(rec, dict):
            raise MalformedSpec(f"dimension record must be a mapping: {rec!r}")
        try:
            dims.append(
                DimensionSpec(
                    link_name=str(rec["link"]),
                    category=str(rec["category"]),
                    lower=float(rec["lower"]),
                    upper=float(rec["upper"]),
                    symmetry_group=(
                        str(rec["group"]) if rec.get("group") is not None else None
                    ),
                )
            )
        except KeyError as exc:
            raise MalformedSpec(f"dimension record missing field {exc}") from exc
    return make_space(dims)


def load_space(path) -> DesignSpace:
    with open(path, "r", encoding="utf-8") as fh:
        return build_space(fh.read())


@dataclass(frozen=True)
class MorphParams:
    """Physical scale factors for every dimension of a design space."""

    space: DesignSpace
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (len(self.space.dims),):
            raise DimensionMismatch(
                f"expected {len(self.space.dims)} values, got {vals.shape}"
            )
        lo, hi = self.space.lower_bounds(), self.space.upper_bounds()
        if np.any(vals < lo) or np.any(vals > hi):
            bad = int(np.argmax((vals < lo) | (vals > hi)))
            raise InvalidBounds(
                f"{self.space.dims[bad].name}: value {vals[bad]} outside "
                f"[{lo[bad]}, {hi[bad]}]"
            )
        for i, rep in enumerate(self.space.rep_of_dim):
            if vals[i] != vals[self.space.rep_dims[rep]]:
                raise InvalidBounds(
                    f"symmetry group broken at {self.space.dims[i].name}"
                )
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    def value(self, link_name: str, category: str) -> float:
        return float(self.values[self.space.index_of(link_name, category)])

    def factors_for(self, link_name: str) -> dict[str, float]:
        """All category factors of one link (missing categories default 1)."""
        out = {c: 1.0 for c in CATEGORIES}
        for i, d in enumerate(self.space.dims):
            if d.link_name == link_name:
                out[d.category] = float(self.values[i])
        return out


def to_normalized(p: MorphParams) -> np.ndarray:
    """Map physical factors to the unit cube, one coordinate per free dim."""
    space = p.space
    out = np.empty(space.free_dim_count)
    for j, dim_idx in enumerate(space.rep_dims):
        d = space.dims[dim_idx]
        out[j] = (p.values[dim_idx] - d.lower) / (d.upper - d.lower)
    return out


def from_normalized(x: Sequence[float] | np.ndarray, space: DesignSpace) -> MorphParams:
    """Expand a unit-cube point to physical factors (clamped, symmetry-tied)."""
    x = np.asarray(x, dtype=float)
    if x.shape != (space.free_dim_count,):
        raise DimensionMismatch(
            f"expected {space.free_dim_count} coordinates, got {x.shape}"
        )
    if not np.all(np.isfinite(x)):
        raise DimensionMismatch("normalized coordinates must be finite")
    x = np.clip(x, 0.0, 1.0)
    values = np.empty(len(space.dims))
    for i, rep in enumerate(space.rep_of_dim):
        d = space.dims[space.rep_dims[rep]]
        values[i] = d.lower + x[rep] * (d.upper - d.lower)
    return MorphParams(space=space, values=values)


def sample_uniform(space: DesignSpace, rng: np.random.Generator) -> MorphParams:
    """One i.i.d.-uniform sample of every free coordinate within its bounds."""
    values = np.empty(len(space.dims))
    free = np.empty(space.free_dim_count)
    for j, dim_idx in enumerate(space.rep_dims):
        d = space.dims[dim_idx]
        free[j] = rng.uniform(d.lower, d.upper)
    for i, rep in enumerate(space.rep_of_dim):
        values[i] = free[rep]
    return MorphParams(space=space, values=values)


def identity_params(space: DesignSpace) -> MorphParams:
    """All factors 1.0 (requires 1.0 inside every dimension's bounds)."""
    return MorphParams(space=space, values=np.ones(len(space.dims)))


def params_from_factors(
    space: DesignSpace, factors: dict[str, float]
) -> MorphParams:
    """Build MorphParams from `link.category` -> value entries.

    Unspecified dimensions stay at 1.0; a value given for any member of a
    symmetry group applies to the whole group, and conflicting values for
    one group are rejected.
    """
    free = np.ones(space.free_dim_count)
    given: dict[int, str] = {}
    for key, value in factors.items():
        link, _, category = key.rpartition(".")
        if not link:
            raise MalformedSpec(f"factor key must be 'link.category': {key!r}")
        try:
            dim_idx = space.index_of(link, category)
        except KeyError:
            raise MalformedSpec(f"unknown dimension {key!r}") from None
        rep = space.rep_of_dim[dim_idx]
        if rep in given and free[rep] != float(value):
            raise MalformedSpec(
                f"{key!r} conflicts with {given[rep]!r} in the same symmetry group"
            )
        free[rep] = float(value)
        given[rep] = key
    values = np.empty(len(space.dims))
    for i, rep in enumerate(space.rep_of_dim):
        values[i] = free[rep]
    return MorphParams(space=space, values=values)
