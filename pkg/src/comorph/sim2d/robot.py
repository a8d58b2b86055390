"""Planar robot description and morphology-scaled model construction.

The body is a sagittal six-link tree: torso (root), upper/lower arm hanging
from the shoulder, and thigh/shin/foot below the hip. The five actuated
joints are shoulder pitch, elbow, hip pitch, knee, and ankle.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import yaml

from ..errors import ConfigError, UnmappedLink
from ..morphspace import MorphParams

LINK_NAMES = ("torso", "upper_arm", "lower_arm", "thigh", "shin", "foot")
JOINT_NAMES = ("shoulder_pitch", "elbow", "hip_pitch", "knee", "ankle")

# Tree structure: parent link index, and which joint drives each link.
LINK_PARENT = (-1, 0, 1, 0, 3, 4)

_DATA_DIR = Path(__file__).resolve().parent.parent / "data"


@dataclass(frozen=True)
class LinkGeom:
    length: float
    mass: float
    radius: float
    space_link: str | None = None  # design-space link carrying this link's factors


@dataclass(frozen=True)
class JointSpec:
    lower: float
    upper: float
    kp: float
    kd: float
    stiffness: float  # passive spring toward the neutral angle
    damping: float    # passive damper

    def __post_init__(self):
        if not self.lower < self.upper:
            raise ConfigError(f"joint limits not ordered: {self.lower}, {self.upper}")


@dataclass(frozen=True)
class RobotModel:
    name: str
    links: dict[str, LinkGeom]
    joints: dict[str, JointSpec]
    shoulder_fraction: float
    foot_heel_fraction: float
    contact_kn: float = 1.0e4
    contact_dn: float = 150.0
    contact_ct: float = 200.0
    contact_mu: float = 0.8
    gravity: float = 9.81

    def __post_init__(self):
        for name in LINK_NAMES:
            if name not in self.links:
                raise ConfigError(f"missing link {name!r}")
            g = self.links[name]
            if g.length <= 0 or g.mass <= 0 or g.radius <= 0:
                raise ConfigError(f"link {name!r}: non-positive dimension")
        for name in JOINT_NAMES:
            if name not in self.joints:
                raise ConfigError(f"missing joint {name!r}")

    @property
    def h_stand(self) -> float:
        """Head height when standing: ankle rest height plus leg and torso."""
        l = self.links
        return (
            l["foot"].radius
            + l["shin"].length
            + l["thigh"].length
            + l["torso"].length
        )

    @property
    def total_mass(self) -> float:
        return sum(g.mass for g in self.links.values())

    def packed(self) -> tuple:
        """Flat arrays for the simulation kernel."""
        lengths = np.array([self.links[n].length for n in LINK_NAMES])
        mass = np.array([self.links[n].mass for n in LINK_NAMES])
        radius = np.array([self.links[n].radius for n in LINK_NAMES])
        inertia = mass * lengths**2 / 12.0  # uniform rod about its COM

        # Segment extent along the link axis, relative to the joint anchor.
        c0 = np.zeros(6)
        c1 = lengths.copy()
        heel = self.foot_heel_fraction * self.links["foot"].length
        c0[5], c1[5] = -heel, self.links["foot"].length - heel

        # Joint anchor distance along the parent link axis.
        anchor = np.zeros(6)
        anchor[1] = self.shoulder_fraction * self.links["torso"].length
        anchor[2] = self.links["upper_arm"].length
        anchor[3] = 0.0
        anchor[4] = self.links["thigh"].length
        anchor[5] = self.links["shin"].length

        # Mounting angle of each link frame relative to its parent frame.
        mount = np.array([0.0, np.pi, 0.0, np.pi, 0.0, np.pi / 2.0])

        kp = np.array([self.joints[n].kp for n in JOINT_NAMES])
        kd = np.array([self.joints[n].kd for n in JOINT_NAMES])
        ks = np.array([self.joints[n].stiffness for n in JOINT_NAMES])
        kdp = np.array([self.joints[n].damping for n in JOINT_NAMES])
        jlo = np.array([self.joints[n].lower for n in JOINT_NAMES])
        jhi = np.array([self.joints[n].upper for n in JOINT_NAMES])

        # Ground-contact probe points: (link index, offset along the axis).
        cp_link = np.array([0, 0, 0, 1, 2, 3, 5, 5], dtype=np.int64)
        cp_off = np.array(
            [
                0.0,
                0.5 * lengths[0],
                lengths[0],
                c1[1],
                c1[2],
                c1[3],
                c0[5],
                c1[5],
            ]
        )
        return (
            anchor, c0, c1, mass, inertia, radius, mount,
            kp, kd, ks, kdp, jlo, jhi, cp_link, cp_off,
        )


def _require(mapping, key, where):
    try:
        return mapping[key]
    except (KeyError, TypeError):
        raise ConfigError(f"{where}: missing field {key!r}") from None


def load_robot(path) -> RobotModel:
    """Read a planar robot description (YAML) from disk."""
    path = Path(path)
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: not valid YAML: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: robot description must be a mapping")
    links = {}
    for name, rec in _require(doc, "links", str(path)).items():
        links[str(name)] = LinkGeom(
            length=float(_require(rec, "length", f"link {name}")),
            mass=float(_require(rec, "mass", f"link {name}")),
            radius=float(_require(rec, "radius", f"link {name}")),
            space_link=rec.get("space_link"),
        )
    joints = {}
    for name, rec in _require(doc, "joints", str(path)).items():
        joints[str(name)] = JointSpec(
            lower=float(_require(rec, "lower", f"joint {name}")),
            upper=float(_require(rec, "upper", f"joint {name}")),
            kp=float(_require(rec, "kp", f"joint {name}")),
            kd=float(_require(rec, "kd", f"joint {name}")),
            stiffness=float(_require(rec, "stiffness", f"joint {name}")),
            damping=float(_require(rec, "damping", f"joint {name}")),
        )
    return RobotModel(
        name=str(doc.get("name", path.stem)),
        links=links,
        joints=joints,
        shoulder_fraction=float(doc.get("shoulder_fraction", 0.92)),
        foot_heel_fraction=float(doc.get("foot_heel_fraction", 0.25)),
    )


# Which joint a scalable link's stiffness/damping factors act on.
_LINK_JOINT = {
    "upper_arm": "shoulder_pitch",
    "lower_arm": "elbow",
    "thigh": "hip_pitch",
    "shin": "knee",
    "foot": "ankle",
}


def build_model(base: RobotModel, params: MorphParams) -> RobotModel:
    """Apply morphology factors to the planar model.

    Lengths scale with the mesh Z factor (the long axis), masses with the
    mass factor; stiffness-like quantities (passive spring, kp) scale with
    the joint-stiffness factor and damping-like quantities (passive damper,
    kd) with the joint-damping factor. Inertias and the standing height are
    recomputed from the scaled geometry.
    """
    space_links = set(params.space.link_names)
    links = dict(base.links)
    joints = dict(base.joints)
    for link_name, geom in base.links.items():
        if geom.space_link is None:
            continue
        if geom.space_link not in space_links:
            raise UnmappedLink(
                f"planar link {link_name!r} expects design-space link "
                f"{geom.space_link!r}, absent from the parameter space"
            )
        f = params.factors_for(geom.space_link)
        links[link_name] = replace(
            geom,
            length=geom.length * f["mesh_scale_z"],
            mass=geom.mass * f["mass_scale"],
        )
        joint_name = _LINK_JOINT[link_name]
        j = base.joints[joint_name]
        joints[joint_name] = replace(
            j,
            kp=j.kp * f["joint_stiffness_scale"],
            stiffness=j.stiffness * f["joint_stiffness_scale"],
            kd=j.kd * f["joint_damping_scale"],
            damping=j.damping * f["joint_damping_scale"],
        )
    return replace(base, links=links, joints=joints)


def builtin_design_names() -> tuple[str, ...]:
    return tuple(
        sorted(p.name for p in (_DATA_DIR / "designs").iterdir() if p.is_dir())
    )


def builtin_design_dir(name: str) -> Path:
    path = _DATA_DIR / "designs" / name
    if not path.is_dir():
        raise ConfigError(
            f"unknown built-in design {name!r}; have {builtin_design_names()}"
        )
    return path
