"""psh.colors

Predefined hand colour templates. A template is picked once per sequence and
every mesh vertex receives its colour from the template's assignment rule.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING
import sys

import numpy as np
from numpy.typing import NDArray

if sys.version_info >= (3, 11):
    from enum import StrEnum
else:
    class StrEnum(str, Enum): ...

if TYPE_CHECKING:
    from .handmodel import MeshTopology

# (base, accent) 8-bit RGB; accent tints the fingertips
PALETTES = {
    "porcelain": ((241, 214, 196), (247, 196, 190)),
    "ivory": ((232, 190, 160), (240, 180, 170)),
    "sand": ((214, 168, 128), (226, 160, 146)),
    "olive": ((190, 142, 100), (204, 140, 122)),
    "amber": ((166, 114, 74), (184, 124, 104)),
    "bronze": ((136, 90, 58), (160, 106, 90)),
    "umber": ((104, 66, 42), (130, 88, 74)),
    "ebony": ((72, 46, 32), (102, 70, 60)),
}


class SkinTone(StrEnum):
    porcelain = "porcelain"
    ivory = "ivory"
    sand = "sand"
    olive = "olive"
    amber = "amber"
    bronze = "bronze"
    umber = "umber"
    ebony = "ebony"


@dataclass(frozen=True)
class ColorTemplate:
    """Rule: every vertex gets `base`; vertices on a distal finger segment are
    blended towards `accent` in proportion to how far along the segment they sit.
    """

    id: int
    name: str
    base: tuple[int, int, int]
    accent: tuple[int, int, int]

    def vertex_colors(self, topology: MeshTopology) -> NDArray[np.uint8]:
        base = np.asarray(self.base, dtype=np.float64)
        accent = np.asarray(self.accent, dtype=np.float64)
        tint = np.where(topology.vertex_distal, topology.vertex_t, 0.0)
        colors = base + tint[:, None] * (accent - base)
        return np.clip(np.rint(colors), 0, 255).astype(np.uint8)


TEMPLATES: tuple[ColorTemplate, ...] = tuple(
    ColorTemplate(i, tone.value, *PALETTES[tone.value]) for i, tone in enumerate(SkinTone)
)


def get_template(id_or_name: int | str | SkinTone) -> ColorTemplate:
    if isinstance(id_or_name, int):
        if not 0 <= id_or_name < len(TEMPLATES):
            raise KeyError(f"Colour template id {id_or_name} not found")
        return TEMPLATES[id_or_name]
    for template in TEMPLATES:
        if template.name == id_or_name:
            return template
    raise KeyError(f"Colour template {id_or_name!r} not found")
