"""Coronary artery territories of the 18-segment LV model.

Wall-based assignment: anterior/anteroseptal walls to LAD,
inferoseptal/inferior to RCA, inferolateral/anterolateral to LCx,
uniformly across the basal/mid/apical rows.  The three sets partition
segments 1..18.
"""

from __future__ import annotations

TERRITORIES: dict[str, tuple[int, ...]] = {
    "LAD": (1, 2, 7, 8, 13, 14),
    "RCA": (3, 4, 9, 10, 15, 16),
    "LCx": (5, 6, 11, 12, 17, 18),
}

TERRITORY_NAMES = tuple(TERRITORIES)


def territory_of(segment: int) -> str:
    for name, segs in TERRITORIES.items():
        if segment in segs:
            return name
    raise ValueError(f"segment id {segment} outside 1..18")


def validate_partition(territories: dict[str, tuple[int, ...]] = TERRITORIES) -> None:
    all_segs = sorted(s for segs in territories.values() for s in segs)
    if all_segs != list(range(1, 19)):
        raise ValueError("territory sets must partition segments 1..18")
