"""Object-to-mask assignment by bounding-box IoU.

Each detected object is independently assigned the mask whose bounding
box maximizes IoU with the object's box; assignments at or below the
threshold discard the object together with its incident relationships.
The resulting map is surjective onto the matched masks, and a
deterministic pseudo-inverse picks one representative object per mask.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

from .geometry import Mask, as_fraction, bbox_iou, mask_to_bbox
from .providers import DetectedObject, Relationship

DEFAULT_IOU_THRESHOLD = Fraction(1, 10)


@dataclass(frozen=True)
class MatchPair:
    object_id: int
    mask_tid: int
    iou: Fraction


@dataclass
class MatchResult:
    """Assignment of detected objects to masks for one frame.

    ``pairs`` is the object->mask map restricted to matched objects;
    ``representatives`` maps every matched mask back to one of its
    matched objects (highest IoU, ties to the lowest object id).
    """

    pairs: list[MatchPair]
    representatives: dict[int, int]
    discarded_objects: list[int]
    surviving_relationships: list[Relationship]

    def mask_for(self, object_id: int) -> int | None:
        for p in self.pairs:
            if p.object_id == object_id:
                return p.mask_tid
        return None

    def to_json(self) -> dict:
        return {
            "pairs": [
                {
                    "object": p.object_id,
                    "mask": p.mask_tid,
                    "iou": [p.iou.numerator, p.iou.denominator],
                }
                for p in self.pairs
            ],
            "representatives": {
                str(tid): obj for tid, obj in sorted(self.representatives.items())
            },
            "discarded_objects": list(self.discarded_objects),
            "surviving_relationships": [
                {"s": r.subject_id, "p": r.predicate, "o": r.object_id}
                for r in self.surviving_relationships
            ],
        }


def pseudo_inverse(pairs: Iterable[MatchPair]) -> dict[int, int]:
    """One representative object per matched mask.

    Highest IoU wins; exact ties break to the lowest object id.
    """
    best: dict[int, MatchPair] = {}
    for pair in sorted(pairs, key=lambda p: p.object_id):
        cur = best.get(pair.mask_tid)
        if cur is None or pair.iou > cur.iou:
            best[pair.mask_tid] = pair
    return {tid: p.object_id for tid, p in best.items()}


def match(
    objects: Sequence[DetectedObject],
    masks: Sequence[Mask],
    relationships: Sequence[Relationship] = (),
    *,
    iou_threshold: Fraction | float = DEFAULT_IOU_THRESHOLD,
) -> MatchResult:
    """Assign each object its best mask, keeping only IoU strictly above
    the threshold.

    Deterministic regardless of input order: objects and masks are
    sorted by id/tid internally, and argmax ties between masks break to
    the lowest tid.
    """
    threshold = as_fraction(iou_threshold)
    if not 0 < threshold < 1:
        raise ValueError(f"iou_threshold must be in (0, 1), got {threshold}")
    for m in masks:
        if m.tid is None:
            raise ValueError("matching requires masks with assigned tids")

    mask_boxes = [(m.tid, mask_to_bbox(m)) for m in sorted(masks, key=lambda m: m.tid)]
    pairs: list[MatchPair] = []
    discarded: list[int] = []
    for obj in sorted(objects, key=lambda o: o.local_id):
        best_tid = None
        best_iou = Fraction(0)
        for tid, box in mask_boxes:
            iou = bbox_iou(obj.bbox, box)
            if iou > best_iou:  # strict: ties keep the lowest tid seen first
                best_tid, best_iou = tid, iou
        if best_tid is not None and best_iou > threshold:
            pairs.append(MatchPair(obj.local_id, best_tid, best_iou))
        else:
            discarded.append(obj.local_id)

    dropped = set(discarded)
    surviving = [
        r
        for r in relationships
        if r.subject_id not in dropped and r.object_id not in dropped
    ]
    return MatchResult(
        pairs=pairs,
        representatives=pseudo_inverse(pairs),
        discarded_objects=discarded,
        surviving_relationships=surviving,
    )
