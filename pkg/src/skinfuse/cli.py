"""Command line interface.

Commands: segment, register, errormap, fuse, phantom, bench, pipeline.
Exit codes: 0 success, then one distinct code per failure class (see
EXIT_CODES); unexpected errors exit 1.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import mesh as mesh_mod
from .errors import (
    ConfigError,
    ErrorMapError,
    MeshError,
    PhantomError,
    RegistrationError,
    SegmentationError,
    SkinFuseError,
    TrackingError,
    VolumeError,
)
from .errormap import colorize, hausdorff
from .phantom import CameraSimSpec, PhantomSpec, make_phantom, make_scenario, simulate_camera
from .pipeline import PipelineConfig, run_pipeline, write_image
from .ply import read_ply, write_ply
from .registration import IcpParams, Landmark, coregister
from .rigid import RigidTransform
from .segmentation import extract_skin_mesh, segment_volume
from .tracking import load_frames, volume_to_probe
from .volume import PlaneSpec, load_volume, reformat_slice, subsample, write_volume

EXIT_CODES = {
    ConfigError: 2,
    VolumeError: 3,
    SegmentationError: 4,
    MeshError: 5,
    RegistrationError: 6,
    ErrorMapError: 7,
    TrackingError: 8,
    PhantomError: 9,
}


def _vec3(text: str) -> tuple[float, float, float]:
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected x,y,z, got {text!r}")
    return tuple(float(p) for p in parts)


def _ivec3(text: str) -> tuple[int, int, int]:
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected fx,fy,fz, got {text!r}")
    return tuple(int(p) for p in parts)


def _load_json(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"file not found: {path}")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON: {e}") from e


def _dump_json(payload, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _cmd_segment(args) -> int:
    t0 = time.perf_counter()
    vol = load_volume(args.volume)
    t_read = time.perf_counter() - t0
    if tuple(args.subsample) != (1, 1, 1):
        vol = subsample(vol, args.subsample)
    t0 = time.perf_counter()
    labels = segment_volume(vol, args.iso, pad_width=args.pad)
    t_seg = time.perf_counter() - t0
    t0 = time.perf_counter()
    mesh = extract_skin_mesh(labels, vol.spacing, vol.origin, vol.axes)
    t_extract = time.perf_counter() - t0
    write_ply(mesh, args.out)
    print(f"volume reading   {t_read:8.3f} s")
    print(f"segmentation     {t_seg:8.3f} s")
    print(f"skin extraction  {t_extract:8.3f} s")
    print(f"vertices {mesh.n_vertices}  triangles {mesh.n_triangles}  -> {args.out}")
    return 0


def _cmd_register(args) -> int:
    seg_mesh, _ = read_ply(args.seg)
    cam_mesh, _ = read_ply(args.cam)
    params = IcpParams(
        max_iterations=args.max_iterations,
        convergence_mm=args.convergence_mm,
        trim_stage1=args.trim,
        trim_stage2=args.trim2,
    )
    result = coregister(
        seg_mesh,
        cam_mesh,
        Landmark(args.landmark_seg, args.landmark_cam),
        params=params,
        anterior_axis=args.anterior_axis,
        roi_mm=args.roi_mm,
        stage2_fraction=args.stage2_fraction,
    )
    payload = {
        **result.transform.to_dict(),
        "metadata": {"stages": [s.to_dict() for s in result.stages]},
    }
    _dump_json(payload, args.out_transform)
    if args.out_errormap:
        posed = result.front_mesh.transformed(result.transform)
        write_ply(posed, args.out_errormap,
                  colors=colorize(result.error_map.distances_a, args.saturate_mm))
    if args.out_errormap_cam:
        write_ply(cam_mesh, args.out_errormap_cam,
                  colors=colorize(result.error_map.distances_b, args.saturate_mm))
    print(f"hausdorff {result.error_map.hausdorff:.3f} mm  -> {args.out_transform}")
    return 0


def _cmd_errormap(args) -> int:
    mesh_a, _ = read_ply(args.a)
    mesh_b, _ = read_ply(args.b)
    error_map = hausdorff(mesh_a.vertices, mesh_b.vertices)
    write_ply(mesh_a, args.out, colors=colorize(error_map.distances_a, args.saturate_mm))
    if args.report:
        _dump_json({"saturation_mm": args.saturate_mm, **error_map.to_report()}, args.report)
    print(f"hausdorff {error_map.hausdorff:.3f} mm  -> {args.out}")
    return 0


def _cmd_fuse(args) -> int:
    vol = load_volume(args.volume)
    coreg = RigidTransform.from_dict(_load_json(args.transform))
    frames = load_frames(args.frames)
    plane = PlaneSpec.from_dict(_load_json(args.plane))
    to_probe = volume_to_probe(coreg, frames, camera=args.camera_frame, probe=args.probe_frame)
    image = reformat_slice(vol, to_probe, plane)
    write_image(image, args.out)
    print(f"fused slice {image.shape[1]}x{image.shape[0]} px -> {args.out}")
    return 0


def _cmd_phantom(args) -> int:
    if args.phantom_cmd == "make":
        spec = PhantomSpec.from_dict(_load_json(args.spec))
        vol = make_phantom(spec)
        write_volume(vol, args.out)
        print(f"phantom volume {vol.dims} -> {args.out}")
        return 0
    if args.phantom_cmd == "camera":
        mesh, _ = read_ply(args.mesh)
        spec = CameraSimSpec.from_dict(_load_json(args.spec))
        cam = simulate_camera(mesh, spec)
        write_ply(cam, args.out)
        print(f"camera surface {cam.n_vertices} vertices -> {args.out}")
        return 0
    # scenario: phantom + posed camera surface + landmarks + truth, on disk
    spec_dict = _load_json(args.spec)
    phantom_spec = PhantomSpec.from_dict(spec_dict.get("phantom", {}))
    truth = (
        RigidTransform.from_dict(spec_dict["ground_truth"])
        if "ground_truth" in spec_dict
        else RigidTransform.identity()
    )
    cam_args = spec_dict.get("camera", {})
    data = make_scenario(
        phantom_spec,
        truth,
        distance_mm=float(cam_args.get("distance_mm", 250.0)),
        azimuth_deg=float(cam_args.get("azimuth_deg", 0.0)),
        tilt_deg=float(cam_args.get("tilt_deg", 45.0)),
        fov_deg=float(cam_args.get("fov_deg", 70.0)),
        noise_sigma_mm=float(cam_args.get("noise_sigma_mm", 0.0)),
        noise_ref_mm=cam_args.get("noise_ref_mm"),
        dropout=float(cam_args.get("dropout", 0.0)),
        seed=int(cam_args.get("seed", 0)),
    )
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_volume(data.volume, out / "phantom.hdr")
    write_ply(data.seg_mesh, out / "skin.ply")
    write_ply(data.cam_mesh, out / "camera.ply")
    _dump_json(
        {
            "iso": data.iso,
            "anterior_axis": list(data.anterior_axis),
            "landmark_seg": [float(v) for v in data.landmark.seg_mm],
            "landmark_cam": [float(v) for v in data.landmark.cam_mm],
        },
        out / "landmarks.json",
    )
    _dump_json(data.truth.to_dict(), out / "truth.json")
    print(f"scenario written to {out}")
    return 0


def _cmd_bench(args) -> int:
    rows = []
    for size in args.sizes:
        nx, ny, nz = size
        extent = np.array(size, dtype=np.float64) * args.spacing
        spec = PhantomSpec(
            dims=size,
            spacing_mm=(args.spacing,) * 3,
            semi_axes_mm=tuple(0.35 * extent),
            bumps=(),
        )
        vol = make_phantom(spec)
        import tempfile

        with tempfile.TemporaryDirectory() as tmp:
            hdr = Path(tmp) / "bench.hdr"
            write_volume(vol, hdr)
            reads, segs, extracts = [], [], []
            for _ in range(args.repeat):
                t0 = time.perf_counter()
                loaded = load_volume(hdr)
                reads.append(time.perf_counter() - t0)
                t0 = time.perf_counter()
                labels = segment_volume(loaded, spec.iso)
                segs.append(time.perf_counter() - t0)
                t0 = time.perf_counter()
                extract_skin_mesh(labels, loaded.spacing, loaded.origin, loaded.axes)
                extracts.append(time.perf_counter() - t0)
        rows.append(
            {
                "dims": list(size),
                "voxels": int(np.prod(size)),
                "volume_reading_s": float(np.median(reads)),
                "segmentation_s": float(np.median(segs)),
                "skin_extraction_s": float(np.median(extracts)),
            }
        )
    ratios = [
        rows[i]["segmentation_s"] / rows[i - 1]["segmentation_s"] for i in range(1, len(rows))
    ]
    print(f"{'dims':>16} {'voxels':>10} {'read s':>8} {'segment s':>10} {'extract s':>10}")
    for row in rows:
        dims = "x".join(str(d) for d in row["dims"])
        print(
            f"{dims:>16} {row['voxels']:>10} {row['volume_reading_s']:>8.3f} "
            f"{row['segmentation_s']:>10.3f} {row['skin_extraction_s']:>10.3f}"
        )
    if ratios:
        print("segmentation time ratios between consecutive sizes:",
              " ".join(f"{r:.2f}" for r in ratios))
    if args.out:
        _dump_json({"rows": rows, "segmentation_ratios": ratios}, args.out)
    return 0


def _cmd_pipeline(args) -> int:
    overrides = {
        "volume": args.volume,
        "iso": args.iso,
        "cam_mesh": args.cam,
        "landmark_seg": args.landmark_seg,
        "landmark_cam": args.landmark_cam,
        "out_dir": args.out_dir,
        "roi_mm": args.roi_mm,
        "trim_stage1": args.trim,
        "saturation_mm": args.saturate_mm,
        "seed": args.seed,
        "threads": args.threads,
    }
    config = PipelineConfig.from_json(args.config, overrides)
    report = run_pipeline(config)
    print(f"hausdorff {report.hausdorff_mm:.3f} mm")
    for stage, seconds in report.timings_s.items():
        print(f"{stage:<16} {seconds:8.3f} s")
    print(f"outputs in {report.out_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="skinfuse",
                                     description="Skin segmentation and surface co-registration pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("segment", help="segment a volume and extract the skin mesh")
    p.add_argument("--volume", required=True, help="volume header path")
    p.add_argument("--iso", required=True, type=float, help="skin iso-value")
    p.add_argument("--subsample", type=_ivec3, default=(1, 1, 1), metavar="fx,fy,fz")
    p.add_argument("--pad", type=int, default=1, help="slice padding width in voxels")
    p.add_argument("--out", required=True, help="output mesh (.ply)")
    p.set_defaults(func=_cmd_segment)

    p = sub.add_parser("register", help="co-register a segmented mesh to a camera mesh")
    p.add_argument("--seg", required=True, help="segmented skin mesh (.ply)")
    p.add_argument("--cam", required=True, help="camera surface mesh (.ply)")
    p.add_argument("--landmark-seg", required=True, type=_vec3, metavar="x,y,z")
    p.add_argument("--landmark-cam", required=True, type=_vec3, metavar="x,y,z")
    p.add_argument("--anterior-axis", type=_vec3, default=(0.0, 1.0, 0.0), metavar="x,y,z")
    p.add_argument("--roi-mm", type=float, default=150.0)
    p.add_argument("--trim", type=float, default=0.8, help="stage-1 trim fraction")
    p.add_argument("--trim2", type=float, default=None,
                   help="stage-2 trim fraction (default 0.8 * stage 1)")
    p.add_argument("--stage2-fraction", type=float, default=0.8,
                   help="fraction of stage-1 points kept for stage 2")
    p.add_argument("--max-iterations", type=int, default=60)
    p.add_argument("--convergence-mm", type=float, default=0.01)
    p.add_argument("--saturate-mm", type=float, default=5.0)
    p.add_argument("--out-transform", required=True)
    p.add_argument("--out-errormap", default=None, help="coloured registered mesh (.ply)")
    p.add_argument("--out-errormap-cam", default=None, help="coloured camera mesh (.ply)")
    p.set_defaults(func=_cmd_register)

    p = sub.add_parser("errormap", help="distance map between two meshes")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--saturate-mm", type=float, default=5.0)
    p.add_argument("--out", required=True, help="coloured copy of mesh A (.ply)")
    p.add_argument("--report", default=None, help="JSON distance statistics")
    p.set_defaults(func=_cmd_errormap)

    p = sub.add_parser("fuse", help="resample the volume on the probe image plane")
    p.add_argument("--volume", required=True)
    p.add_argument("--transform", required=True, help="co-registration JSON")
    p.add_argument("--frames", required=True, help="tracked frames JSON")
    p.add_argument("--plane", required=True, help="plane spec JSON")
    p.add_argument("--camera-frame", default="camera")
    p.add_argument("--probe-frame", default="probe")
    p.add_argument("--out", required=True, help="output image (.pgm or .png)")
    p.set_defaults(func=_cmd_fuse)

    p = sub.add_parser("phantom", help="synthetic test data")
    psub = p.add_subparsers(dest="phantom_cmd", required=True)
    q = psub.add_parser("make", help="voxelise a phantom body")
    q.add_argument("--spec", required=True, help="phantom spec JSON")
    q.add_argument("--out", required=True, help="output volume header")
    q = psub.add_parser("camera", help="simulate a camera view of a mesh")
    q.add_argument("--mesh", required=True)
    q.add_argument("--spec", required=True, help="camera spec JSON")
    q.add_argument("--out", required=True)
    q = psub.add_parser("scenario", help="full experiment bundle on disk")
    q.add_argument("--spec", required=True, help="scenario spec JSON")
    q.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_phantom)

    p = sub.add_parser("bench", help="timing sweep and segmentation linearity check")
    p.add_argument("--sizes", type=lambda s: [_ivec3(x.strip()) for x in s.split(";")],
                   default=[(64, 64, 32), (64, 64, 64), (64, 64, 128)],
                   help="semicolon-separated nx,ny,nz triples")
    p.add_argument("--spacing", type=float, default=2.0)
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--out", default=None, help="JSON report path")
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("pipeline", help="run the full pipeline from a config file")
    p.add_argument("--config", required=True, help="pipeline config JSON")
    p.add_argument("--volume", default=None)
    p.add_argument("--iso", type=float, default=None)
    p.add_argument("--cam", default=None)
    p.add_argument("--landmark-seg", type=_vec3, default=None, metavar="x,y,z")
    p.add_argument("--landmark-cam", type=_vec3, default=None, metavar="x,y,z")
    p.add_argument("--out-dir", default=None)
    p.add_argument("--roi-mm", type=float, default=None)
    p.add_argument("--trim", type=float, default=None)
    p.add_argument("--saturate-mm", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threads", type=int, default=None)
    p.set_defaults(func=_cmd_pipeline)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "threads", None):
        mesh_mod.QUERY_WORKERS = args.threads
    try:
        return args.func(args)
    except SkinFuseError as e:
        print(f"error: {e}", file=sys.stderr)
        for cls, code in EXIT_CODES.items():
            if isinstance(e, cls):
                return code
        return 1


if __name__ == "__main__":
    sys.exit(main())
