"""Skin-surface segmentation and rigid co-registration for fusion imaging.

Segments the external body surface from a CT/MR volume, co-registers it to an
independently acquired 3D camera surface (PCA + virtual landmark + two trimmed
ICP runs), quantifies the alignment as a per-vertex Hausdorff distance map,
and chains tracked coordinate frames so the volume can be resampled in the
ultrasound-probe frame.
"""

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
from .errormap import DistanceSummary, ErrorMap, colorize, directed_distance, hausdorff
from .mesh import (
    KdTreeIndex,
    TriangleMesh,
    build_kdtree,
    front_cut,
    nearest,
    remove_degenerate_triangles,
    vertex_normals,
)
from .phantom import (
    Bump,
    CameraSimSpec,
    PhantomSpec,
    ScenarioData,
    make_phantom,
    make_scenario,
    scenario,
    simulate_camera,
    skin_surface,
)
from .pipeline import PipelineConfig, RunReport, run_pipeline, write_image
from .ply import read_ply, write_ply
from .registration import (
    CoregResult,
    IcpParams,
    IcpResult,
    Landmark,
    StageReport,
    coregister,
    icp_trimmed,
    pca_align,
    pca_candidate_rotations,
    principal_axes,
    solve_rigid_pairs,
)
from .rigid import (
    RigidTransform,
    compose,
    invert,
    relative_rotation_deg,
    rotation_about_axis,
    rotation_angle_deg,
)
from .segmentation import (
    BACKGROUND,
    INTERIOR,
    SKIN,
    LabelGrid,
    extract_skin_mesh,
    segment_slice,
    segment_volume,
)
from .tracking import Frame, FrameRegistry, load_frames, resolve, save_frames, volume_to_probe
from .volume import (
    PlaneSpec,
    Volume,
    load_volume,
    pad_slices,
    reformat_slice,
    subsample,
    write_volume,
)

__version__ = "0.1.0"
