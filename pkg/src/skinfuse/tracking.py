"""Static coordinate-frame registry: camera and probe sensors posed against a
single transmitter (star topology). Poses are snapshots per pipeline run."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .errors import TrackingError
from .rigid import RigidTransform, compose, invert

TRACKER = "tracker"


@dataclass(frozen=True)
class Frame:
    """A named frame with its pose mapping frame coordinates to tracker
    coordinates."""

    name: str
    pose: RigidTransform


class FrameRegistry:
    """Immutable star of frames around one tracker (transmitter) frame.

    The tracker frame itself is always present with the identity pose.
    """

    def __init__(self, frames=(), tracker_name: str = TRACKER):
        self._frames: dict[str, Frame] = {
            tracker_name: Frame(tracker_name, RigidTransform.identity())
        }
        for frame in frames:
            if frame.name in self._frames:
                raise TrackingError(f"duplicate frame name {frame.name!r}")
            self._frames[frame.name] = frame

    def __contains__(self, name: str) -> bool:
        return name in self._frames

    def names(self) -> list[str]:
        return sorted(self._frames)

    def pose(self, name: str) -> RigidTransform:
        try:
            return self._frames[name].pose
        except KeyError:
            raise TrackingError(
                f"unknown frame {name!r}; registered frames: {self.names()}"
            ) from None

    def resolve(self, src: str, dst: str) -> RigidTransform:
        """Transform taking src-frame coordinates to dst-frame coordinates."""
        return compose(invert(self.pose(dst)), self.pose(src))


def resolve(frames: FrameRegistry, src: str, dst: str) -> RigidTransform:
    return frames.resolve(src, dst)


def volume_to_probe(coreg: RigidTransform, frames: FrameRegistry,
                    camera: str = "camera", probe: str = "probe") -> RigidTransform:
    """Chain the co-registration with the tracked poses.

    coreg maps volume millimetres into the camera-surface frame; composing
    with camera-to-probe puts the volume in the probe frame, ready for
    reformatting on the probe's image plane.
    """
    return compose(frames.resolve(camera, probe), coreg)


def load_frames(path) -> FrameRegistry:
    """Read a JSON list of {name, R (9 floats row-major), t (3 floats, mm)}."""
    path = Path(path)
    if not path.is_file():
        raise TrackingError(f"frames file not found: {path}")
    try:
        entries = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise TrackingError(f"{path}: invalid JSON: {e}") from e
    if not isinstance(entries, list):
        raise TrackingError(f"{path}: expected a JSON list of frames")
    frames = []
    for entry in entries:
        try:
            frames.append(Frame(str(entry["name"]), RigidTransform.from_dict(entry)))
        except Exception as e:
            raise TrackingError(f"{path}: bad frame entry {entry!r}: {e}") from e
    return FrameRegistry(frames)


def save_frames(frames: list[Frame], path) -> Path:
    path = Path(path)
    payload = [{"name": f.name, **f.pose.to_dict()} for f in frames]
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return path
