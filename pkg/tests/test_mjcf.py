import numpy as np
import pytest

from comorph.errors import (
    InvalidBounds,
    MissingAttribute,
    MissingBinding,
    MjcfParseError,
    UnsupportedConstruct,
)
from comorph.mjcf import (
    apply_factors,
    apply_morphology,
    canonical_serialize,
    content_hash,
    format_number,
    parse,
)
from comorph.morphology import materialize
from comorph.morphspace import from_normalized, identity_params, params_from_factors, sample_uniform

ALPHA_GOLDEN_HASH = "58034f865039e658"

SMALL = b"""<mujoco model="t">
<asset><mesh name="arm" scale="1 1 1"/></asset>
<worldbody>
<body name="arm" pos="0 0 1">
<joint name="arm_joint" stiffness="2.0" damping="0.5"/>
<inertial pos="0 0 0" mass="0.5"/>
<body name="child" pos="0.1 0.2 -0.3"/>
</body>
</worldbody>
</mujoco>"""


def test_parse_minimal():
    doc = parse(b"<mujoco/>")
    assert doc.root.tag == "mujoco"
    assert doc.root.children == []


def test_parse_structure_addressable():
    doc = parse(b"<mujoco><asset><mesh name='m' scale='1 1 1'/></asset></mujoco>")
    mesh = doc.find_by_name("mesh", "m")
    assert mesh is not None and mesh.attrs["scale"] == "1 1 1"


def test_parse_truncated_reports_offset():
    data = b"<mujoco><body"
    with pytest.raises(MjcfParseError) as err:
        parse(data)
    assert err.value.offset <= len(data)
    assert err.value.offset > 0


def test_parse_rejects_processing_instruction():
    with pytest.raises(UnsupportedConstruct):
        parse(b"<mujoco><?py nope?></mujoco>")


def test_parse_accepts_declaration_and_comments():
    doc = parse(b"<?xml version='1.0'?><mujoco><!-- note --><asset/></mujoco>")
    assert [c.tag for c in doc.root.children] == ["asset"]


def test_format_number_trims():
    assert format_number(1.2000000) == "1.2"
    assert format_number(0.50) == "0.5"
    assert format_number(1e10) == "1e10"
    assert format_number(1.5e-7) == "1.5e-7"
    assert format_number(2.0) == "2"


def test_canonical_float_spelling_equal_bytes():
    a = parse(b'<m><inertial mass="0.50"/></m>')
    b_ = parse(b'<m><inertial mass="0.5"/></m>')
    assert canonical_serialize(a) == canonical_serialize(b_)
    assert content_hash(a) == content_hash(b_)


def test_canonical_idempotent():
    doc = parse(SMALL)
    once = canonical_serialize(doc)
    twice = canonical_serialize(parse(once))
    assert once == twice


def test_content_hash_deterministic():
    assert content_hash(parse(SMALL)) == content_hash(parse(SMALL))


def test_content_hash_distinguishes_mass():
    other = SMALL.replace(b'mass="0.5"', b'mass="0.51"')
    assert content_hash(parse(SMALL)) != content_hash(parse(other))


def test_golden_hash_of_alpha_fixture(alpha_doc):
    assert content_hash(alpha_doc).hash_hex == ALPHA_GOLDEN_HASH


def _toy_binding():
    from comorph.mjcf import LinkBinding

    return {
        "left_arm": LinkBinding(
            link_name="left_arm", mesh="arm", body="arm", joints=("arm_joint",)
        )
    }


def _toy_space():
    from comorph.morphspace import build_space

    return build_space(
        """
dimensions:
  - {link: left_arm, category: mesh_scale_x, lower: 0.5, upper: 2.0}
  - {link: left_arm, category: mesh_scale_y, lower: 0.5, upper: 2.0}
  - {link: left_arm, category: mesh_scale_z, lower: 0.5, upper: 2.0}
  - {link: left_arm, category: mass_scale, lower: 0.5, upper: 2.0}
  - {link: left_arm, category: joint_stiffness_scale, lower: 0.5, upper: 2.0}
  - {link: left_arm, category: joint_damping_scale, lower: 0.5, upper: 2.0}
"""
    )


def test_apply_scales_all_categories():
    space = _toy_space()
    params = params_from_factors(
        space,
        {
            "left_arm.mesh_scale_x": 1.2,
            "left_arm.mesh_scale_y": 1.0,
            "left_arm.mesh_scale_z": 0.9,
            "left_arm.mass_scale": 1.1,
            "left_arm.joint_stiffness_scale": 2.0,
            "left_arm.joint_damping_scale": 0.5,
        },
    )
    out = apply_morphology(parse(SMALL), params, _toy_binding())
    assert out.find_by_name("mesh", "arm").attrs["scale"] == "1.2 1 0.9"
    body = out.find_by_name("body", "arm")
    inertial = next(c for c in body.children if c.tag == "inertial")
    assert inertial.attrs["mass"] == "0.55"
    joint = out.find_by_name("joint", "arm_joint")
    assert joint.attrs["stiffness"] == "4"
    assert joint.attrs["damping"] == "0.25"
    # child attachment offsets follow the parent mesh factors
    child = out.find_by_name("body", "child")
    assert child.attrs["pos"] == "0.12 0.2 -0.27"


def test_identity_transform_is_byte_exact():
    doc = parse(SMALL)
    out = apply_morphology(doc, identity_params(_toy_space()), _toy_binding())
    assert canonical_serialize(out) == canonical_serialize(doc)


def test_input_document_unmodified():
    doc = parse(SMALL)
    before = canonical_serialize(doc)
    apply_factors(doc, {"left_arm": {"mass_scale": 1.7}}, _toy_binding())
    assert canonical_serialize(doc) == before


def test_missing_binding():
    with pytest.raises(MissingBinding):
        apply_factors(parse(SMALL), {"left_leg": {"mass_scale": 1.0}}, _toy_binding())


def test_missing_attribute_when_injection_disabled():
    doc = parse(b'<m><mesh name="arm"/><body name="arm"><joint name="arm_joint"/>'
                b'<inertial mass="1"/></body></m>')
    with pytest.raises(MissingAttribute):
        apply_factors(
            doc, {"left_arm": {"mesh_scale_x": 1.5}}, _toy_binding(),
            inject_defaults=False,
        )


def test_default_injection_on_missing_scale():
    doc = parse(b'<m><mesh name="arm"/><body name="arm"><joint name="arm_joint"/>'
                b'<inertial mass="1"/></body></m>')
    out = apply_factors(doc, {"left_arm": {"mesh_scale_x": 1.5}}, _toy_binding())
    assert out.find_by_name("mesh", "arm").attrs["scale"] == "1.5 1 1"
    # zero-stiffness scaling is a no-op; the attribute stays absent
    assert "stiffness" not in out.find_by_name("joint", "arm_joint").attrs


def test_composition_law(space, link_map, alpha_doc):
    rng = np.random.default_rng(3)
    x1 = rng.uniform(0.2, 0.8, space.free_dim_count)
    x2 = rng.uniform(0.2, 0.8, space.free_dim_count)
    p1 = from_normalized(x1, space)
    p2 = from_normalized(x2, space)
    seq = apply_morphology(apply_morphology(alpha_doc, p1, link_map), p2, link_map)
    combined = apply_factors(
        alpha_doc,
        {
            link: {
                cat: p1.factors_for(link)[cat] * p2.factors_for(link)[cat]
                for cat in p1.factors_for(link)
            }
            for link in space.link_names
        },
        link_map,
    )
    _assert_numeric_equal(seq.root, combined.root, rel=1e-9)


def _assert_numeric_equal(a, b, rel):
    assert a.tag == b.tag
    assert list(a.attrs) == list(b.attrs)
    for key in a.attrs:
        va, vb = a.attrs[key], b.attrs[key]
        try:
            fa = [float(t) for t in va.split()]
            fb = [float(t) for t in vb.split()]
        except ValueError:
            assert va == vb
            continue
        for x, y in zip(fa, fb):
            assert x == pytest.approx(y, rel=rel)
    assert len(a.children) == len(b.children)
    for ca, cb in zip(a.children, b.children):
        _assert_numeric_equal(ca, cb, rel)


def test_hash_injectivity_on_sampled_corpus(space, link_map, alpha_doc):
    rng = np.random.default_rng(99)
    ids = set()
    for _ in range(100):
        params = sample_uniform(space, rng)
        morph = materialize(alpha_doc, params, link_map)
        ids.add(morph.id_hex)
    assert len(ids) == 100


def test_out_of_bounds_params_rejected(space):
    with pytest.raises(InvalidBounds):
        params_from_factors(space, {"left_foot.mass_scale": 3.0})
