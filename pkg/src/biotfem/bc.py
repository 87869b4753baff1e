"""Boundary conditions: independent mechanical and flow settings per segment.

The mechanical side of a segment is either clamped (zero displacement,
essential) or loaded with a constant traction (natural).  The flow side is
either impermeable (zero normal flux, essential for the flux field) or
drained at a prescribed pressure (natural; only zero drainage pressure is
exercised by the built-in experiments).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Union

import numpy as np

from .mesh import Mesh, Segment


@dataclass(frozen=True)
class Clamped:
    pass


@dataclass(frozen=True)
class Traction:
    vector: tuple[float, float]


@dataclass(frozen=True)
class Impermeable:
    pass


@dataclass(frozen=True)
class Drained:
    pressure: float = 0.0


@dataclass(frozen=True)
class SegmentBC:
    displacement: Union[Clamped, Traction]
    flow: Union[Impermeable, Drained]


class BoundarySpec:
    """Per-segment boundary conditions covering every boundary tag of a mesh."""

    def __init__(self, segments: Mapping[Segment, SegmentBC]):
        if Segment.INTERIOR in segments:
            raise ValueError("interior faces carry no boundary condition")
        self.segments = dict(segments)

    @classmethod
    def uniform(cls, displacement, flow) -> "BoundarySpec":
        seg = SegmentBC(displacement, flow)
        return cls({s: seg for s in (Segment.BOTTOM, Segment.RIGHT, Segment.TOP, Segment.LEFT)})

    def segment(self, tag: Segment) -> SegmentBC:
        try:
            return self.segments[tag]
        except KeyError:
            raise ValueError(f"boundary tag {tag} has no boundary condition entry") from None

    def check_covers(self, mesh: Mesh) -> None:
        for f in mesh.boundary_faces:
            self.segment(mesh.face_tags[f])

    def clamped_faces(self, mesh: Mesh) -> np.ndarray:
        out = [f for f in mesh.boundary_faces
               if isinstance(self.segment(mesh.face_tags[f]).displacement, Clamped)]
        return np.asarray(out, dtype=np.int64)

    def traction_faces(self, mesh: Mesh) -> list[tuple[int, np.ndarray]]:
        out = []
        for f in mesh.boundary_faces:
            disp = self.segment(mesh.face_tags[f]).displacement
            if isinstance(disp, Traction):
                out.append((int(f), np.asarray(disp.vector, dtype=float)))
        return out

    def impermeable_faces(self, mesh: Mesh) -> np.ndarray:
        out = [f for f in mesh.boundary_faces
               if isinstance(self.segment(mesh.face_tags[f]).flow, Impermeable)]
        return np.asarray(out, dtype=np.int64)
