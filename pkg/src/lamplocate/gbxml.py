"""gbXML generation: LightingSystem elements linked to Spaces via thermal zones.

Only the lighting subset of the schema is emitted: one LightingSystem per
(zone, model) group of registry records, a Space per referenced zone, and a
Lighting reference tying them together. Shell geometry is one polyloop per
lamp (corners of its light surface under the fused pose, implicitly closed:
the first point is not repeated).
"""

from __future__ import annotations

import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DanglingReference, UnknownModel
from .registry import LampRegistry, assign_zone

GBXML_NS = "http://www.gbxml.org/schema"
GBXML_VERSION = "6.01"


@dataclass
class LightingSystemEntry:
    system_id: str
    lamp: str
    number_of_lamps: int
    polyloops: list  # list of (k, 3) float arrays, metres
    luminaire: str | None = None
    cost: str | None = None

    def __eq__(self, other):
        if not isinstance(other, LightingSystemEntry):
            return NotImplemented
        if (self.system_id, self.lamp, self.number_of_lamps, self.luminaire, self.cost) != (
            other.system_id, other.lamp, other.number_of_lamps, other.luminaire, other.cost
        ):
            return False
        if len(self.polyloops) != len(other.polyloops):
            return False
        return all(np.array_equal(a, b) for a, b in zip(self.polyloops, other.polyloops))


@dataclass(frozen=True)
class SpaceLink:
    space_id: str
    system_id: str


@dataclass
class UnassignedReport:
    record_ids: list = field(default_factory=list)


def build_lighting_systems(registry: LampRegistry, models: dict, zones):
    """Group records by (zone, model) into LightingSystem entries plus space links.

    ``models`` maps model id to an object with ``light_surface`` corners and
    optional ``bulb`` metadata (a TemplateDatabase entry map fits). Records
    that land in no zone are collected into the returned report rather than
    dropped silently.
    """
    groups: dict = {}
    report = UnassignedReport()
    for rec in registry.records:
        if rec.model_id not in models:
            raise UnknownModel(f"record {rec.record_id} references unknown model {rec.model_id}")
        if rec.zone_id is None:
            assign_zone(rec, zones)
        if rec.zone_id is None:
            report.record_ids.append(rec.record_id)
            continue
        groups.setdefault((rec.zone_id, rec.model_id), []).append(rec)
    entries = []
    links = []
    for (zone_id, model_id) in sorted(groups):
        recs = groups[(zone_id, model_id)]
        model = models[model_id]
        bulb = getattr(model, "bulb", None)
        lamp = bulb.describe() if bulb is not None else getattr(model, "name", model_id)
        system_id = f"ls-{zone_id}-{model_id}"
        loops = [rec.fused.apply(np.asarray(model.light_surface)) for rec in recs]
        entries.append(LightingSystemEntry(
            system_id=system_id, lamp=lamp, number_of_lamps=len(recs), polyloops=loops,
        ))
        links.append(SpaceLink(space_id=f"space-{zone_id}", system_id=system_id))
    return entries, links, report


def _indent(elem: ET.Element, level: int = 0) -> None:
    pad = "\n" + "  " * level
    if len(elem):
        if not elem.text or not elem.text.strip():
            elem.text = pad + "  "
        for child in elem:
            _indent(child, level + 1)
            if not child.tail or not child.tail.strip():
                child.tail = pad + "  "
        if not elem[-1].tail or not elem[-1].tail.strip():
            elem[-1].tail = pad
    elif level and (not elem.tail or not elem.tail.strip()):
        elem.tail = pad


def write_gbxml(entries, links, out) -> bytes:
    """Serialize entries and links to a deterministic gbXML document.

    Systems and spaces are ordered by id; floats are written with ``repr`` so
    re-parsing recovers them exactly. Raises DanglingReference for a link to a
    missing system id. Returns the bytes written (``out`` may be None to skip
    writing a file).
    """
    ids = {e.system_id for e in entries}
    for link in links:
        if link.system_id not in ids:
            raise DanglingReference(f"space {link.space_id} references missing {link.system_id}")
    root = ET.Element("gbXML", {
        "xmlns": GBXML_NS,
        "version": GBXML_VERSION,
        "lengthUnit": "Meters",
    })
    campus = ET.SubElement(root, "Campus", {"id": "campus-1"})
    building = ET.SubElement(campus, "Building", {"id": "building-1", "buildingType": "Unknown"})
    for link in sorted(links, key=lambda l: (l.space_id, l.system_id)):
        space = ET.SubElement(building, "Space", {"id": link.space_id})
        ET.SubElement(space, "Lighting", {"lightingSystemIdRef": link.system_id})
    for entry in sorted(entries, key=lambda e: e.system_id):
        sys_el = ET.SubElement(root, "LightingSystem", {"id": entry.system_id})
        ET.SubElement(sys_el, "Lamp").text = entry.lamp
        ET.SubElement(sys_el, "NumberOfLamps").text = str(entry.number_of_lamps)
        shell = ET.SubElement(ET.SubElement(sys_el, "ShellGeometry",
                                            {"id": f"{entry.system_id}-shell"}), "ClosedShell")
        for loop in entry.polyloops:
            loop_el = ET.SubElement(shell, "PolyLoop")
            for point in np.asarray(loop, dtype=float):
                pt_el = ET.SubElement(loop_el, "CartesianPoint")
                for coord in point:
                    ET.SubElement(pt_el, "Coordinate").text = repr(float(coord))
        if entry.luminaire is not None:
            ET.SubElement(sys_el, "Luminaire").text = entry.luminaire
        if entry.cost is not None:
            ET.SubElement(sys_el, "Cost").text = entry.cost
    _indent(root)
    data = b'<?xml version="1.0" encoding="UTF-8"?>\n' + ET.tostring(root, encoding="utf-8")
    if out is not None:
        Path(out).write_bytes(data)
    return data


def parse_gbxml(source):
    """Inverse of write_gbxml: returns (entries, links).

    ``source`` is either the document bytes or a file path.
    """
    if isinstance(source, bytes):
        root = ET.fromstring(source)
    else:
        root = ET.parse(source).getroot()
    ns = {"g": GBXML_NS}
    links = []
    for space in root.findall(".//g:Space", ns):
        for lighting in space.findall("g:Lighting", ns):
            links.append(SpaceLink(space.get("id"), lighting.get("lightingSystemIdRef")))
    entries = []
    for sys_el in root.findall("g:LightingSystem", ns):
        loops = []
        for loop_el in sys_el.findall(".//g:PolyLoop", ns):
            pts = []
            for pt_el in loop_el.findall("g:CartesianPoint", ns):
                pts.append([float(c.text) for c in pt_el.findall("g:Coordinate", ns)])
            loops.append(np.array(pts, dtype=float))
        lum = sys_el.find("g:Luminaire", ns)
        cost = sys_el.find("g:Cost", ns)
        entries.append(LightingSystemEntry(
            system_id=sys_el.get("id"),
            lamp=sys_el.findtext("g:Lamp", namespaces=ns),
            number_of_lamps=int(sys_el.findtext("g:NumberOfLamps", namespaces=ns)),
            polyloops=loops,
            luminaire=lum.text if lum is not None else None,
            cost=cost.text if cost is not None else None,
        ))
    return entries, links
