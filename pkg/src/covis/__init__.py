"""Cascaded salient-subject segmentation, feature-grounded description
generation, and the benchmarking / rating-study tooling around them."""

from .cascade import (
    CoarseSegmentation,
    FeatureMap,
    FineMask,
    PipelineConfig,
    PipelineResult,
    RegionProposal,
    extract_features,
    propose_regions,
    refine,
    run_pipeline,
)
from .errors import CovisError
from .features import FeatureBundle, Provenance, encode
from .io import (
    BinaryMask,
    DatasetManifest,
    GrayMask,
    RasterImage,
    binarize,
    load_binary_mask,
    load_image,
    load_manifest,
    load_pair,
    save_gray_mask,
    save_image,
)
from .metrics import (
    METRIC_FIELDS,
    MetricReport,
    aggregate,
    e_measure,
    evaluate_pair,
    f_measure_max,
    f_measure_weighted,
    mae,
    s_measure,
)
from .promptgen import (
    LLMEndpointConfig,
    PilotScore,
    PromptProfile,
    build_prompt,
    default_profile,
    generate_description,
    pilot_evaluate,
)
from .study import StudyService, build_app, create_study, load_study, save_study

__version__ = "0.1.0"

__all__ = [
    "BinaryMask",
    "CoarseSegmentation",
    "CovisError",
    "DatasetManifest",
    "FeatureBundle",
    "FeatureMap",
    "FineMask",
    "GrayMask",
    "LLMEndpointConfig",
    "METRIC_FIELDS",
    "MetricReport",
    "PilotScore",
    "PipelineConfig",
    "PipelineResult",
    "PromptProfile",
    "Provenance",
    "RasterImage",
    "RegionProposal",
    "StudyService",
    "aggregate",
    "binarize",
    "build_app",
    "build_prompt",
    "create_study",
    "default_profile",
    "e_measure",
    "encode",
    "evaluate_pair",
    "extract_features",
    "f_measure_max",
    "f_measure_weighted",
    "generate_description",
    "load_binary_mask",
    "load_image",
    "load_manifest",
    "load_pair",
    "load_study",
    "mae",
    "pilot_evaluate",
    "propose_regions",
    "refine",
    "run_pipeline",
    "s_measure",
    "save_gray_mask",
    "save_image",
    "save_study",
]
