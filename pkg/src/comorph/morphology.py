"""A concrete morphology: parameters plus content-hash identity."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .mjcf import (
    LinkBinding,
    MjcfDocument,
    MorphologyId,
    apply_morphology,
    canonical_serialize,
    content_hash,
    full_digest,
)
from .morphspace import MorphParams


@dataclass(frozen=True)
class Morphology:
    params: MorphParams
    morph_id: MorphologyId
    document: MjcfDocument | None = None

    @property
    def id_hex(self) -> str:
        return self.morph_id.hash_hex


def materialize(
    base_doc: MjcfDocument,
    params: MorphParams,
    link_map: dict[str, LinkBinding],
) -> Morphology:
    """Apply params to the base document and derive the content-hash id."""
    doc = apply_morphology(base_doc, params, link_map)
    return Morphology(params=params, morph_id=content_hash(doc), document=doc)


def write_mjcf_with_sidecar(
    doc: MjcfDocument, factors: dict, out_dir, parent_file: str = ""
) -> Path:
    """Write `<hash>.xml` plus its JSON metadata sidecar; returns the XML path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    morph_id = content_hash(doc)
    xml_path = out_dir / f"{morph_id.hash_hex}.xml"
    xml_path.write_bytes(canonical_serialize(doc))
    sidecar = {
        "id": morph_id.hash_hex,
        "parent_file": parent_file,
        "factors": factors,
        "full_digest": full_digest(doc),
    }
    with open(out_dir / f"{morph_id.hash_hex}.json", "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return xml_path


def write_morphology(morph: Morphology, out_dir, parent_file: str = "") -> Path:
    if morph.document is None:
        raise ValueError("morphology has no materialized document")
    factors = {
        link: morph.params.factors_for(link)
        for link in morph.params.space.link_names
    }
    return write_mjcf_with_sidecar(morph.document, factors, out_dir, parent_file)
