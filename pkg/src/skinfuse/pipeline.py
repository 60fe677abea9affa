"""End-to-end pipeline: segment, register, error map, fused slice, reports.

The configuration is a JSON file whose values individual CLI flags may
override. Outputs are deterministic for a fixed configuration and seed; stage
wall times go to a separate timing report so the data outputs stay
byte-stable across reruns.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .errormap import colorize, hausdorff
from .ply import read_ply, write_ply
from .registration import IcpParams, Landmark, coregister
from .rigid import RigidTransform
from .segmentation import extract_skin_mesh, segment_volume
from .tracking import load_frames, volume_to_probe
from .volume import PlaneSpec, load_volume, reformat_slice, subsample


def write_image(image: np.ndarray, path) -> Path:
    """Write a 2D image as 8-bit grayscale PGM (P5) or PNG by extension.

    The value range is mapped linearly onto 0..255 (constant images become 0).
    """
    img = np.asarray(image, dtype=np.float64)
    lo, hi = float(img.min()), float(img.max())
    if hi > lo:
        scaled = np.rint((img - lo) / (hi - lo) * 255.0).astype(np.uint8)
    else:
        scaled = np.zeros(img.shape, dtype=np.uint8)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if path.suffix.lower() == ".png":
        from PIL import Image

        Image.fromarray(scaled, mode="L").save(path)
    else:
        h, w = scaled.shape
        with path.open("wb") as f:
            f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
            f.write(scaled.tobytes())
    return path


def _json_dump(payload: dict, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return path


@dataclass
class PipelineConfig:
    """Inputs, parameters and output directory for one pipeline run."""

    volume: Path = None
    iso: float = None
    cam_mesh: Path = None
    landmark_seg: tuple[float, float, float] = None
    landmark_cam: tuple[float, float, float] = None
    out_dir: Path = None
    subsample: tuple[int, int, int] = (1, 1, 1)
    pad_width: int = 1
    anterior_axis: tuple[float, float, float] = (0.0, 1.0, 0.0)
    roi_mm: float = 150.0
    trim_stage1: float = 0.8
    trim_stage2: float | None = None
    stage2_fraction: float = 0.8
    max_iterations: int = 60
    convergence_mm: float = 0.01
    saturation_mm: float = 5.0
    frames: Path | None = None
    plane: dict | None = None
    camera_frame: str = "camera"
    probe_frame: str = "probe"
    seed: int = 0
    threads: int = 1

    @staticmethod
    def from_json(path, overrides: dict | None = None) -> "PipelineConfig":
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            raw = json.loads(path.read_text())
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON: {e}") from e
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
        known = {f.name for f in fields(PipelineConfig)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"{path}: unknown config keys {sorted(unknown)}")
        merged = dict(raw)
        for key, value in (overrides or {}).items():
            if value is not None:
                merged[key] = value
        cfg = PipelineConfig(**merged)
        # Relative input paths resolve against the config file location.
        base = path.parent
        for name in ("volume", "cam_mesh", "frames", "out_dir"):
            value = getattr(cfg, name)
            if value is not None and not Path(value).is_absolute():
                setattr(cfg, name, base / value)
        return cfg

    def icp_params(self) -> IcpParams:
        return IcpParams(
            max_iterations=self.max_iterations,
            convergence_mm=self.convergence_mm,
            trim_stage1=self.trim_stage1,
            trim_stage2=self.trim_stage2,
        )

    def validate(self) -> None:
        missing = [
            name
            for name in ("volume", "iso", "cam_mesh", "landmark_seg", "landmark_cam", "out_dir")
            if getattr(self, name) is None
        ]
        if missing:
            raise ConfigError(f"config is missing required values: {missing}")
        for name in ("volume", "cam_mesh", "frames"):
            value = getattr(self, name)
            if value is not None and not Path(value).is_file():
                raise ConfigError(f"{name} file does not exist: {value}")
        if (self.frames is None) != (self.plane is None):
            raise ConfigError("frames and plane must be given together")
        factors = tuple(int(v) for v in self.subsample)
        if len(factors) != 3 or min(factors) < 1:
            raise ConfigError(f"subsample factors must be 3 positive integers, got {self.subsample}")
        if self.roi_mm <= 0:
            raise ConfigError(f"roi_mm must be positive, got {self.roi_mm}")
        if self.saturation_mm <= 0:
            raise ConfigError(f"saturation_mm must be positive, got {self.saturation_mm}")
        if self.pad_width < 1:
            raise ConfigError(f"pad_width must be >= 1, got {self.pad_width}")
        if self.threads < 1:
            raise ConfigError(f"threads must be >= 1, got {self.threads}")
        try:
            self.icp_params()
        except Exception as e:
            raise ConfigError(f"bad ICP parameters: {e}") from e
        if self.plane is not None:
            PlaneSpec.from_dict(self.plane)


@dataclass
class RunReport:
    """What the pipeline produced and how long each stage took."""

    out_dir: Path
    hausdorff_mm: float
    transform: RigidTransform
    timings_s: dict[str, float] = field(default_factory=dict)
    outputs: dict[str, str] = field(default_factory=dict)


def run_pipeline(config: PipelineConfig) -> RunReport:
    """Execute segment -> register -> error map -> fuse and write all outputs."""
    config.validate()
    from . import mesh as mesh_mod

    mesh_mod.QUERY_WORKERS = config.threads
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    timings: dict[str, float] = {}
    outputs: dict[str, str] = {}

    t0 = time.perf_counter()
    vol = load_volume(config.volume)
    timings["volume_reading"] = time.perf_counter() - t0

    factors = tuple(int(v) for v in config.subsample)
    if factors != (1, 1, 1):
        vol = subsample(vol, factors)

    t0 = time.perf_counter()
    labels = segment_volume(vol, config.iso, pad_width=config.pad_width)
    timings["segmentation"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    seg_mesh = extract_skin_mesh(labels, vol.spacing, vol.origin, vol.axes)
    timings["skin_extraction"] = time.perf_counter() - t0
    outputs["skin_mesh"] = str(write_ply(seg_mesh, out / "skin.ply"))

    cam_mesh, _ = read_ply(config.cam_mesh)
    landmark = Landmark(config.landmark_seg, config.landmark_cam)
    t0 = time.perf_counter()
    result = coregister(
        seg_mesh,
        cam_mesh,
        landmark,
        params=config.icp_params(),
        anterior_axis=config.anterior_axis,
        roi_mm=config.roi_mm,
        stage2_fraction=config.stage2_fraction,
    )
    timings["registration"] = time.perf_counter() - t0

    transform_payload = {
        **result.transform.to_dict(),
        "metadata": {"stages": [s.to_dict() for s in result.stages]},
    }
    outputs["transform"] = str(_json_dump(transform_payload, out / "transform.json"))

    t0 = time.perf_counter()
    error_map = result.error_map
    front_posed = result.front_mesh.transformed(result.transform)
    outputs["errormap_seg"] = str(
        write_ply(front_posed, out / "errormap_seg.ply",
                  colors=colorize(error_map.distances_a, config.saturation_mm))
    )
    outputs["errormap_cam"] = str(
        write_ply(cam_mesh, out / "errormap_cam.ply",
                  colors=colorize(error_map.distances_b, config.saturation_mm))
    )
    report = {"saturation_mm": config.saturation_mm, **error_map.to_report()}
    outputs["error_report"] = str(_json_dump(report, out / "error_report.json"))
    timings["errormap"] = time.perf_counter() - t0

    if config.frames is not None:
        t0 = time.perf_counter()
        frames = load_frames(config.frames)
        to_probe = volume_to_probe(result.transform, frames,
                                   camera=config.camera_frame, probe=config.probe_frame)
        plane = PlaneSpec.from_dict(config.plane)
        fused = reformat_slice(vol, to_probe, plane)
        outputs["fused_slice"] = str(write_image(fused, out / "fused.pgm"))
        timings["fuse"] = time.perf_counter() - t0

    timings["total"] = float(sum(timings.values()))
    _json_dump({"timings_s": timings}, out / "timing.json")
    return RunReport(
        out_dir=out,
        hausdorff_mm=error_map.hausdorff,
        transform=result.transform,
        timings_s=timings,
        outputs=outputs,
    )
