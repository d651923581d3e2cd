"""Desk-scale benchmark for polarization-enabled gaze personalization.

Pipeline pieces: polarization channel processing, a deterministic
synthetic binocular dataset, a fixed small network trained either as an
absolute-gaze baseline or as a differential Siamese model, anchor-based
few-shot inference, L1 linear calibration, and percentile error
reporting. The ``petbench`` command wires them together.
"""

from .dataio import BinocularSample, DatasetManifest, SampleLoader, Split, split_subjects
from .evaluation import (
    EvalOptions,
    PercentileReport,
    angular_error,
    compare_runs,
    evaluate,
    gaze_to_unit,
    percentile,
)
from .net import NetModel, ParamSet, encode, forward_baseline, forward_siamese, init_params
from .personalize import (
    AnchorSet,
    LinearCalib,
    apply_linear_calib,
    fit_linear_calib,
    predict_with_anchors,
    select_anchors,
)
from .polarization import (
    IdaFrame,
    Modality,
    MosaicFrame,
    QuadFrame,
    StokesFrame,
    compute_ida,
    compute_stokes,
    demosaic_pfa,
    gaussian_smooth,
    quad_to_input,
    synth_quad_from_ida,
)
from .synthgen import GenConfig, SubjectLatent, gen_dataset, gen_session, render_eye, sample_subject
from .train import LossParams, TrainConfig, adam_step, loss_eq1, train

__version__ = "0.1.0"
