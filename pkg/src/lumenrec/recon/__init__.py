from ..mesh import PointCloud, TriangleMesh, read_ply, sample_mesh_points, write_ply
from .fuse import FuseResult, fuse_depths
from .tsdf import TsdfVolume, extract_mesh, tsdf_integrate
from .icp import IcpResult, icp_register
from .meshdist import ReconMetrics, cloud_mesh_distance
from .sequence import ReconReport, reconstruct_sequence

__all__ = [
    "PointCloud",
    "TriangleMesh",
    "read_ply",
    "sample_mesh_points",
    "write_ply",
    "FuseResult",
    "fuse_depths",
    "TsdfVolume",
    "extract_mesh",
    "tsdf_integrate",
    "IcpResult",
    "icp_register",
    "ReconMetrics",
    "cloud_mesh_distance",
    "ReconReport",
    "reconstruct_sequence",
]
