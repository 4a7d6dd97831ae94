"""Provider contracts for the three external model roles, plus replays.

A detector produces a per-frame scene graph, a generator proposes fresh
segmentation masks, and a propagator carries tracked masks forward in
time. File-backed "recorded" implementations replay pre-computed
outputs so a real model run can be captured once and replayed
byte-identically.
"""

from __future__ import annotations

import json
from abc import ABC, abstractmethod
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Any, Sequence

from .geometry import BBox, Mask, mask_area, mask_from_json, mask_to_json


class ProviderError(Exception):
    """Base class for provider failures."""


class ProviderUnavailableError(ProviderError):
    """The provider cannot serve this request (e.g. missing file)."""


class MalformedOutputError(ProviderError):
    """A recorded file or provider output failed schema validation."""


class DuplicateTrackedIdError(ProviderError):
    """A temporal ID was handed to the propagator twice."""


class ContextMode(str, Enum):
    CURRENT_FRAME = "current_frame"
    LAST_GRAPH = "last_graph"
    ALL_GRAPHS = "all_graphs"


@dataclass(frozen=True)
class FrameRef:
    """Reference to one frame of a clip."""

    clip_id: str
    frame_index: int
    image_path: str | None = None

    def __post_init__(self):
        if self.frame_index < 0:
            raise ValueError(f"frame_index must be >= 0, got {self.frame_index}")


@dataclass(frozen=True)
class DetectedObject:
    local_id: int
    class_label: str
    bbox: BBox

    def __post_init__(self):
        if not self.class_label:
            raise ValueError("class_label must be non-empty")


@dataclass(frozen=True)
class Relationship:
    subject_id: int
    predicate: str
    object_id: int

    def __post_init__(self):
        if self.subject_id == self.object_id:
            raise ValueError(f"self-loop relationship on id {self.subject_id}")
        if not self.predicate:
            raise ValueError("predicate must be non-empty")

    def as_triplet(self) -> tuple[int, str, int]:
        return (self.subject_id, self.predicate, self.object_id)


@dataclass
class FrameSceneGraph:
    """Detector output for one frame: objects plus relationship triplets."""

    frame_index: int
    objects: list[DetectedObject]
    relationships: list[Relationship]

    def __post_init__(self):
        ids = [o.local_id for o in self.objects]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate object ids in frame {self.frame_index}")
        known = set(ids)
        for r in self.relationships:
            if r.subject_id not in known or r.object_id not in known:
                raise ValueError(
                    f"relationship {r.as_triplet()} references unknown object"
                )
        triplets = [r.as_triplet() for r in self.relationships]
        if len(set(triplets)) != len(triplets):
            raise ValueError(f"duplicate relationship triplets in frame {self.frame_index}")


@dataclass(frozen=True)
class DetectorContext:
    """Input strategy for the detector: bare frame or frame plus history."""

    mode: ContextMode = ContextMode.CURRENT_FRAME
    history: tuple = ()

    def __post_init__(self):
        if self.mode is ContextMode.CURRENT_FRAME and self.history:
            raise ValueError("current_frame context carries no history")
        if self.mode is ContextMode.LAST_GRAPH and len(self.history) > 1:
            raise ValueError("last_graph context carries at most one graph")


class TidAllocator:
    """Issues monotonically increasing temporal IDs; never reuses one."""

    def __init__(self, start: int = 0):
        self._next = start

    def next(self) -> int:
        tid = self._next
        self._next += 1
        return tid

    @property
    def issued(self) -> int:
        return self._next


class SceneGraphDetector(ABC):
    """Frame-level scene graph generation (the VLM role)."""

    @abstractmethod
    def generate(self, frame: FrameRef, ctx: DetectorContext) -> FrameSceneGraph:
        ...


class MaskGenerator(ABC):
    """Automatic mask proposal (the segmentation-model role).

    Every returned mask has nonzero area and a fresh temporal ID never
    issued before in this run.
    """

    @abstractmethod
    def generate_masks(self, frame: FrameRef) -> list[Mask]:
        ...


class MaskPropagator(ABC):
    """Stateful mask tracking (the video-predictor role).

    Subclasses implement ``_add`` / ``_propagate``; this base enforces
    the shared contract: no duplicate tracked IDs, propagation only
    past the latest added frame, and every propagated mask carrying a
    previously added tid.
    """

    def __init__(self):
        self._tracked_tids: set[int] = set()
        self._last_add_frame: int | None = None

    @property
    def tracked_tids(self) -> frozenset[int]:
        return frozenset(self._tracked_tids)

    def add_masks(self, frame_index: int, masks: Sequence[Mask]) -> None:
        for m in masks:
            if m.tid is None:
                raise ValueError("cannot track a mask without a tid")
            if m.tid in self._tracked_tids:
                raise DuplicateTrackedIdError(f"tid {m.tid} already tracked")
        for m in masks:
            self._tracked_tids.add(m.tid)
        if masks:
            self._last_add_frame = (
                frame_index
                if self._last_add_frame is None
                else max(self._last_add_frame, frame_index)
            )
        self._add(frame_index, list(masks))

    def propagate_to(self, frame_index: int) -> list[Mask]:
        if self._last_add_frame is not None and frame_index <= self._last_add_frame:
            raise ValueError(
                f"propagate_to({frame_index}) must advance past frame {self._last_add_frame}"
            )
        propagated = self._propagate(frame_index)
        for m in propagated:
            if m.tid not in self._tracked_tids:
                raise MalformedOutputError(
                    f"propagated mask carries unknown tid {m.tid}"
                )
            if mask_area(m) == 0:
                raise MalformedOutputError(f"propagated mask {m.tid} has zero area")
        return propagated

    @abstractmethod
    def _add(self, frame_index: int, masks: list[Mask]) -> None:
        ...

    @abstractmethod
    def _propagate(self, frame_index: int) -> list[Mask]:
        ...


@dataclass
class ProviderBundle:
    """One clip's worth of providers plus the frames to feed them."""

    clip_id: str
    frames: list[FrameRef]
    detector: SceneGraphDetector
    generator: MaskGenerator
    propagator: MaskPropagator
    scenario: Any = None


# --- JSON schemas ----------------------------------------------------------

def frame_scene_graph_to_json(graph: FrameSceneGraph) -> dict:
    return {
        "frame": graph.frame_index,
        "objects": [
            {"id": o.local_id, "label": o.class_label, "bbox": list(o.bbox.as_tuple())}
            for o in graph.objects
        ],
        "relationships": [
            {"s": r.subject_id, "p": r.predicate, "o": r.object_id}
            for r in graph.relationships
        ],
    }


def frame_scene_graph_from_json(obj: dict) -> FrameSceneGraph:
    try:
        frame_index = obj["frame"]
        objects = [
            DetectedObject(local_id=o["id"], class_label=o["label"], bbox=BBox(*o["bbox"]))
            for o in obj["objects"]
        ]
        relationships = [
            Relationship(subject_id=r["s"], predicate=r["p"], object_id=r["o"])
            for r in obj["relationships"]
        ]
        return FrameSceneGraph(frame_index, objects, relationships)
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedOutputError(f"bad frame scene graph: {exc}") from exc


# --- Recorded (file-backed) providers --------------------------------------

def _frames_dir(root: Path, clip_id: str) -> Path:
    return Path(root) / "frames" / clip_id


def _load_json(path: Path) -> dict:
    if not path.exists():
        raise ProviderUnavailableError(f"missing recorded file {path}")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise MalformedOutputError(f"invalid JSON in {path}: {exc}") from exc


class RecordedDetector(SceneGraphDetector):
    """Replays stored frame scene graphs verbatim; context is ignored."""

    def __init__(self, root: Path, clip_id: str):
        self._dir = _frames_dir(root, clip_id)

    def generate(self, frame: FrameRef, ctx: DetectorContext) -> FrameSceneGraph:
        path = self._dir / f"{frame.frame_index}.detector.json"
        obj = _load_json(path)
        graph = frame_scene_graph_from_json(obj)
        if graph.frame_index != frame.frame_index:
            raise MalformedOutputError(
                f"{path} records frame {graph.frame_index}, expected {frame.frame_index}"
            )
        return graph


class RecordedGenerator(MaskGenerator):
    """Replays stored mask proposals; fresh tids are assigned on read."""

    def __init__(self, root: Path, clip_id: str, allocator: TidAllocator):
        self._dir = _frames_dir(root, clip_id)
        self._allocator = allocator

    def generate_masks(self, frame: FrameRef) -> list[Mask]:
        path = self._dir / f"{frame.frame_index}.masks.json"
        obj = _load_json(path)
        try:
            raw = [mask_from_json(m) for m in obj["masks"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedOutputError(f"bad masks file {path}: {exc}") from exc
        masks = []
        for m in raw:
            if mask_area(m) == 0:
                raise MalformedOutputError(f"{path} contains a zero-area mask")
            masks.append(replace(m, tid=self._allocator.next()))
        return masks


class RecordedPropagator(MaskPropagator):
    """Replays stored propagation results; added masks are bookkept only."""

    def __init__(self, root: Path, clip_id: str):
        super().__init__()
        self._dir = _frames_dir(root, clip_id)

    def _add(self, frame_index: int, masks: list[Mask]) -> None:
        pass

    def _propagate(self, frame_index: int) -> list[Mask]:
        path = self._dir / f"{frame_index}.propagated.json"
        obj = _load_json(path)
        try:
            masks = [mask_from_json(m) for m in obj["masks"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedOutputError(f"bad propagated file {path}: {exc}") from exc
        for m in masks:
            if m.tid is None:
                raise MalformedOutputError(f"{path} contains a mask without a tid")
        return masks


def recorded_bundle(root: str | Path, clip_id: str | None = None) -> ProviderBundle:
    """Build a bundle replaying the recorded clip under ``root``.

    The clip is inferred when the directory holds exactly one.
    """
    root = Path(root)
    frames_root = root / "frames"
    if clip_id is None:
        clips = sorted(p.name for p in frames_root.iterdir() if p.is_dir()) if frames_root.is_dir() else []
        if len(clips) != 1:
            raise ValueError(
                f"cannot infer clip id in {root}: found {clips or 'no clips'}"
            )
        clip_id = clips[0]
    clip_dir = _frames_dir(root, clip_id)
    indices = sorted(
        int(p.name.split(".")[0]) for p in clip_dir.glob("*.detector.json")
    )
    if indices != list(range(len(indices))):
        raise ValueError(f"recorded clip {clip_id} has non-contiguous frames: {indices}")
    frames = [FrameRef(clip_id, i) for i in indices]
    allocator = TidAllocator()
    return ProviderBundle(
        clip_id=clip_id,
        frames=frames,
        detector=RecordedDetector(root, clip_id),
        generator=RecordedGenerator(root, clip_id, allocator),
        propagator=RecordedPropagator(root, clip_id),
    )


# --- Recording wrappers (used by `samjam simulate`) -------------------------

def _write_json(path: Path, obj: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2) + "\n")


class RecordingDetector(SceneGraphDetector):
    def __init__(self, inner: SceneGraphDetector, root: Path, clip_id: str):
        self._inner = inner
        self._dir = _frames_dir(root, clip_id)

    def generate(self, frame: FrameRef, ctx: DetectorContext) -> FrameSceneGraph:
        graph = self._inner.generate(frame, ctx)
        _write_json(
            self._dir / f"{frame.frame_index}.detector.json",
            frame_scene_graph_to_json(graph),
        )
        return graph


class RecordingGenerator(MaskGenerator):
    """Records generator output in pre-assignment form (tid null)."""

    def __init__(self, inner: MaskGenerator, root: Path, clip_id: str):
        self._inner = inner
        self._dir = _frames_dir(root, clip_id)

    def generate_masks(self, frame: FrameRef) -> list[Mask]:
        masks = self._inner.generate_masks(frame)
        _write_json(
            self._dir / f"{frame.frame_index}.masks.json",
            {
                "frame": frame.frame_index,
                "masks": [mask_to_json(replace(m, tid=None)) for m in masks],
            },
        )
        return masks


class RecordingPropagator:
    """Duck-typed propagator wrapper that records each propagation."""

    def __init__(self, inner: MaskPropagator, root: Path, clip_id: str):
        self._inner = inner
        self._dir = _frames_dir(root, clip_id)

    @property
    def tracked_tids(self) -> frozenset[int]:
        return self._inner.tracked_tids

    def add_masks(self, frame_index: int, masks: Sequence[Mask]) -> None:
        self._inner.add_masks(frame_index, masks)

    def propagate_to(self, frame_index: int) -> list[Mask]:
        masks = self._inner.propagate_to(frame_index)
        _write_json(
            self._dir / f"{frame_index}.propagated.json",
            {"frame": frame_index, "masks": [mask_to_json(m) for m in masks]},
        )
        return masks
