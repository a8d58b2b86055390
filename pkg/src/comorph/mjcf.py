"""MJCF (MuJoCo XML) parsing, morphology transforms, and content hashing.

The parser keeps a lossless tree for the supported subset: elements,
attributes in source order, and non-whitespace text. Comments are dropped;
processing instructions other than the XML declaration are rejected.
Canonical serialization renders numeric attribute values with up to nine
significant digits so that semantically equal documents hash identically.
"""

from __future__ import annotations

import copy
import hashlib
import re
import xml.parsers.expat
from dataclasses import dataclass, field

import yaml

from .errors import (
    MalformedSpec,
    MissingAttribute,
    MissingBinding,
    MjcfParseError,
    UnsupportedConstruct,
)
from .morphspace import MorphParams


@dataclass
class MjcfElement:
    tag: str
    attrs: dict[str, str] = field(default_factory=dict)  # insertion = source order
    children: list["MjcfElement"] = field(default_factory=list)
    text: str | None = None

    def find_all(self, tag: str):
        if self.tag == tag:
            yield self
        for child in self.children:
            yield from child.find_all(tag)


@dataclass
class MjcfDocument:
    root: MjcfElement

    def copy(self) -> "MjcfDocument":
        return MjcfDocument(root=copy.deepcopy(self.root))

    def find_by_name(self, tag: str, name: str) -> MjcfElement | None:
        for el in self.root.find_all(tag):
            if el.attrs.get("name") == name:
                return el
        return None


@dataclass(frozen=True)
class MorphologyId:
    """Truncated content hash: 16 lowercase hex characters."""

    hash_hex: str

    def __post_init__(self):
        if not re.fullmatch(r"[0-9a-f]{16}", self.hash_hex):
            raise ValueError(f"not a 16-char lowercase hex id: {self.hash_hex!r}")

    def __str__(self) -> str:
        return self.hash_hex


def parse(data: bytes) -> MjcfDocument:
    """Parse UTF-8 XML bytes into a document tree.

    Raises MjcfParseError (with byte offset) on malformed input and
    UnsupportedConstruct on processing instructions.
    """
    parser = xml.parsers.expat.ParserCreate()
    parser.ordered_attributes = True
    parser.buffer_text = True

    stack: list[MjcfElement] = []
    root: list[MjcfElement] = []
    pi_offset: list[int] = []

    def start(tag, attr_list):
        attrs = {attr_list[i]: attr_list[i + 1] for i in range(0, len(attr_list), 2)}
        el = MjcfElement(tag=tag, attrs=attrs)
        if stack:
            stack[-1].children.append(el)
        else:
            root.append(el)
        stack.append(el)

    def end(_tag):
        el = stack.pop()
        if el.text is not None:
            stripped = el.text.strip()
            el.text = stripped if stripped else None

    def chardata(data_):
        if stack:
            stack[-1].text = (stack[-1].text or "") + data_

    def pi(_target, _data):
        pi_offset.append(parser.CurrentByteIndex)

    parser.StartElementHandler = start
    parser.EndElementHandler = end
    parser.CharacterDataHandler = chardata
    parser.ProcessingInstructionHandler = pi
    parser.CommentHandler = lambda _data: None

    try:
        parser.Parse(data, True)
    except xml.parsers.expat.ExpatError as exc:
        raise MjcfParseError(str(exc), offset=parser.ErrorByteIndex) from exc
    if pi_offset:
        raise UnsupportedConstruct(
            f"processing instruction at byte offset {pi_offset[0]}"
        )
    if len(root) != 1:
        raise MjcfParseError("document must have exactly one root element", offset=0)
    return MjcfDocument(root=root[0])


def parse_file(path) -> MjcfDocument:
    with open(path, "rb") as fh:
        return parse(fh.read())


_NUM_RE = re.compile(r"[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?")


def format_number(value: float, digits: int = 9) -> str:
    """Render with <= `digits` significant digits, trimmed zeros, no '+' signs."""
    s = f"{value:.{digits}g}"
    if "e" in s or "E" in s:
        mantissa, exponent = re.split("[eE]", s)
        s = f"{mantissa}e{int(exponent)}"
    return s


def _canonical_value(raw: str) -> str:
    tokens = raw.split()
    if tokens and all(_NUM_RE.fullmatch(t) for t in tokens):
        return " ".join(format_number(float(t)) for t in tokens)
    return raw


def _escape_attr(value: str) -> str:
    return (
        value.replace("&", "&amp;")
        .replace("<", "&lt;")
        .replace(">", "&gt;")
        .replace('"', "&quot;")
    )


def _escape_text(value: str) -> str:
    return value.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def _serialize(el: MjcfElement, out: list[str]):
    parts = [el.tag]
    for key, raw in el.attrs.items():
        parts.append(f'{key}="{_escape_attr(_canonical_value(raw))}"')
    head = " ".join(parts)
    if not el.children and el.text is None:
        out.append(f"<{head}/>\n")
    elif not el.children:
        out.append(f"<{head}>{_escape_text(el.text)}</{el.tag}>\n")
    else:
        out.append(f"<{head}>\n")
        if el.text is not None:
            out.append(f"{_escape_text(el.text)}\n")
        for child in el.children:
            _serialize(child, out)
        out.append(f"</{el.tag}>\n")


def canonical_serialize(doc: MjcfDocument) -> bytes:
    """Canonical UTF-8 form: stable attribute rendering, newline per element."""
    out: list[str] = []
    _serialize(doc.root, out)
    return "".join(out).encode("utf-8")


def full_digest(doc: MjcfDocument) -> str:
    return hashlib.sha256(canonical_serialize(doc)).hexdigest()


def content_hash(doc: MjcfDocument) -> MorphologyId:
    """SHA-256 of the canonical bytes, truncated to 16 hex characters."""
    return MorphologyId(hash_hex=full_digest(doc)[:16])


# --- link map and morphology application -----------------------------------


@dataclass(frozen=True)
class LinkBinding:
    """Element selectors for one design-space link."""

    link_name: str
    mesh: str
    body: str
    joints: tuple[str, ...]


def load_link_map(text_or_path, from_file: bool = False) -> dict[str, LinkBinding]:
    """Read a link-map document: link name -> mesh/body/joint selectors."""
    if from_file:
        with open(text_or_path, "r", encoding="utf-8") as fh:
            text = fh.read()
    else:
        text = text_or_path
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise MalformedSpec(f"link map is not valid YAML: {exc}") from exc
    if not isinstance(doc, dict) or not isinstance(doc.get("links"), dict):
        raise MalformedSpec("link map must be a mapping with a 'links' section")
    bindings = {}
    for link, rec in doc["links"].items():
        try:
            bindings[str(link)] = LinkBinding(
                link_name=str(link),
                mesh=str(rec["mesh"]),
                body=str(rec["body"]),
                joints=tuple(str(j) for j in rec.get("joints", [])),
            )
        except (KeyError, TypeError) as exc:
            raise MalformedSpec(f"bad link-map record for {link!r}: {exc}") from exc
    return bindings


def _scale_attr(el: MjcfElement, attr: str, factors, default: str,
                inject_defaults: bool, what: str):
    """Multiply a whitespace-separated numeric attribute componentwise.

    Missing attributes take the implicit default first; a no-op result on a
    missing attribute is skipped so identity transforms stay byte-exact.
    """
    present = attr in el.attrs
    raw = el.attrs.get(attr, default)
    values = [float(t) for t in raw.split()]
    if len(factors) == 1:
        factors = [factors[0]] * len(values)
    if len(values) != len(factors):
        raise MissingAttribute(
            f"{what}: attribute {attr!r} has {len(values)} components, "
            f"expected {len(factors)}"
        )
    scaled = [v * f for v, f in zip(values, factors)]
    if not present:
        if scaled == values:
            return
        if not inject_defaults:
            raise MissingAttribute(f"{what}: missing attribute {attr!r}")
    # 12 significant digits in the tree: enough that repeated transforms
    # compose cleanly; canonical serialization trims to 9 for hashing.
    el.attrs[attr] = " ".join(format_number(v, digits=12) for v in scaled)


def apply_morphology(
    doc: MjcfDocument,
    params: MorphParams,
    link_map: dict[str, LinkBinding],
    inject_defaults: bool = True,
) -> MjcfDocument:
    """Apply bounded per-link scale factors, returning a new document."""
    factors = {
        link: params.factors_for(link) for link in params.space.link_names
    }
    return apply_factors(doc, factors, link_map, inject_defaults)


def apply_factors(
    doc: MjcfDocument,
    factors_by_link: dict[str, dict[str, float]],
    link_map: dict[str, LinkBinding],
    inject_defaults: bool = True,
) -> MjcfDocument:
    """Apply raw per-link scale factors, returning a new document.

    Per link: mesh ``scale`` components multiply by the three mesh factors,
    inertial ``mass`` by the mass factor, joint ``stiffness``/``damping`` by
    their factors, and each direct child body ``pos`` by the mesh factors so
    scaled links keep their attachment points. Missing categories default
    to 1.
    """
    out = doc.copy()
    for link_name, given in factors_by_link.items():
        binding = link_map.get(link_name)
        if binding is None:
            raise MissingBinding(f"no link-map entry for {link_name!r}")
        f = {
            "mesh_scale_x": 1.0,
            "mesh_scale_y": 1.0,
            "mesh_scale_z": 1.0,
            "mass_scale": 1.0,
            "joint_stiffness_scale": 1.0,
            "joint_damping_scale": 1.0,
        }
        f.update(given)
        mesh_factors = [f["mesh_scale_x"], f["mesh_scale_y"], f["mesh_scale_z"]]

        mesh = out.find_by_name("mesh", binding.mesh)
        if mesh is None:
            raise MissingBinding(f"{link_name}: mesh {binding.mesh!r} not found")
        _scale_attr(mesh, "scale", mesh_factors, "1 1 1",
                    inject_defaults, f"mesh {binding.mesh!r}")

        body = out.find_by_name("body", binding.body)
        if body is None:
            raise MissingBinding(f"{link_name}: body {binding.body!r} not found")
        inertial = next((c for c in body.children if c.tag == "inertial"), None)
        if inertial is None or "mass" not in inertial.attrs:
            raise MissingAttribute(
                f"{link_name}: body {binding.body!r} has no inertial mass"
            )
        _scale_attr(inertial, "mass", [f["mass_scale"]], "1",
                    inject_defaults, f"body {binding.body!r}")

        for joint_name in binding.joints:
            joint = out.find_by_name("joint", joint_name)
            if joint is None:
                raise MissingBinding(f"{link_name}: joint {joint_name!r} not found")
            _scale_attr(joint, "stiffness", [f["joint_stiffness_scale"]], "0",
                        inject_defaults, f"joint {joint_name!r}")
            _scale_attr(joint, "damping", [f["joint_damping_scale"]], "0",
                        inject_defaults, f"joint {joint_name!r}")

        # Connectivity preservation: child attachment offsets follow the
        # parent mesh scaling.
        for child in body.children:
            if child.tag == "body" and "pos" in child.attrs:
                _scale_attr(child, "pos", mesh_factors, "0 0 0",
                            inject_defaults, f"body {binding.body!r} child pos")
    return out
