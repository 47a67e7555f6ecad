"""Random convex bodies: sampling, certified gauges, concentration
experiments, distance bounds, and symmetric-body nets.

The public surface re-exported here is stable; the submodules carry
the implementation detail.
"""

from .linalg import (
    PigeonholeError,
    SpectralInterval,
    SvdResult,
    build_projectors,
    check_matrix,
    hs_norm,
    spectral_interval,
    spectral_norm,
    svd,
)
from .randmodel import (
    BodySample,
    ModelParams,
    TestVector,
    round_half_up,
    sample_body,
    sample_test_vector,
    substream,
)
from .bodies import (
    Ball,
    HullBody,
    SignedPoints,
    ball_body,
    body_from_dict,
    body_to_dict,
    cap_body,
    circumradius_upper,
    inradius_lower,
    read_body,
    subset_body,
    support_function,
    support_many,
    write_body,
)
from .gauge import GaugeResult, GaugeToleranceError, gauge
from .concentration import (
    SmallBallEstimate,
    TailCurve,
    default_thresholds,
    mc_large_deviation,
    mc_quadratic_tail,
    mc_small_ball,
    merge_curves,
    wilson_interval,
)
from .distance import (
    BmEstimate,
    BmOptions,
    EventReport,
    OpNormResult,
    SeparationOptions,
    SeparationReport,
    bm_upper,
    cap_projection_norms,
    check_one_body,
    check_one_vector,
    event_alpha,
    op_norm,
    run_separation,
    separation_scale,
)
from .symnet import (
    PairCertificate,
    StepFamily,
    SymmetricBody,
    SymmetricNet,
    body_from_tag,
    build_net,
    certify_pair,
    enumerate_steps,
    level_count,
    log_profile,
    lorentz_body,
    lp_body,
    net_from_text,
    net_to_text,
    profile_cell,
    quantize_to_grid,
    step_norm,
    tau_for_separation,
    top_k_body,
)

__version__ = "0.1.0"

__all__ = [
    "PigeonholeError",
    "SpectralInterval",
    "SvdResult",
    "build_projectors",
    "check_matrix",
    "hs_norm",
    "spectral_interval",
    "spectral_norm",
    "svd",
    "BodySample",
    "ModelParams",
    "TestVector",
    "round_half_up",
    "sample_body",
    "sample_test_vector",
    "substream",
    "Ball",
    "HullBody",
    "SignedPoints",
    "ball_body",
    "body_from_dict",
    "body_to_dict",
    "cap_body",
    "circumradius_upper",
    "inradius_lower",
    "read_body",
    "subset_body",
    "support_function",
    "support_many",
    "write_body",
    "GaugeResult",
    "GaugeToleranceError",
    "gauge",
    "SmallBallEstimate",
    "TailCurve",
    "default_thresholds",
    "mc_large_deviation",
    "mc_quadratic_tail",
    "mc_small_ball",
    "merge_curves",
    "wilson_interval",
    "BmEstimate",
    "BmOptions",
    "EventReport",
    "OpNormResult",
    "SeparationOptions",
    "SeparationReport",
    "bm_upper",
    "cap_projection_norms",
    "check_one_body",
    "check_one_vector",
    "event_alpha",
    "op_norm",
    "run_separation",
    "separation_scale",
    "PairCertificate",
    "StepFamily",
    "SymmetricBody",
    "SymmetricNet",
    "body_from_tag",
    "build_net",
    "certify_pair",
    "enumerate_steps",
    "level_count",
    "log_profile",
    "lorentz_body",
    "lp_body",
    "net_from_text",
    "net_to_text",
    "profile_cell",
    "quantize_to_grid",
    "step_norm",
    "tau_for_separation",
    "top_k_body",
    "__version__",
]
