"""Interactive point-prompted 3D volumetric segmentation with
self-ensembling uncertainty quantification."""

from .backend import (
    BackendDescriptor,
    BackendRegistry,
    DecodeParams,
    ImageEmbedding,
    PromptSet,
    ReferenceBackend,
    binarize,
    default_registry,
)
from .geometry import (
    RasPoint,
    RegionMap,
    VoxelIndex,
    fit_to_model,
    map_prompt,
    ras_to_voxel,
    restore_mask,
    voxel_to_ras,
)
from .nifti import NiftiHeader, Volume, read_nifti, write_nifti
from .phantom import make_phantom
from .session import Session, create_session
from .uncertainty import (
    EnsembleConfig,
    EnsembleResult,
    run_ensemble,
    sample_prompts,
    uncertainty_to_heatmap,
)

__version__ = "0.1.0"

__all__ = [
    "BackendDescriptor",
    "BackendRegistry",
    "DecodeParams",
    "EnsembleConfig",
    "EnsembleResult",
    "ImageEmbedding",
    "NiftiHeader",
    "PromptSet",
    "RasPoint",
    "ReferenceBackend",
    "RegionMap",
    "Session",
    "Volume",
    "VoxelIndex",
    "binarize",
    "create_session",
    "default_registry",
    "fit_to_model",
    "make_phantom",
    "map_prompt",
    "ras_to_voxel",
    "read_nifti",
    "restore_mask",
    "run_ensemble",
    "sample_prompts",
    "uncertainty_to_heatmap",
    "voxel_to_ras",
    "write_nifti",
]
