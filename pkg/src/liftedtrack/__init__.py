"""Self-supervised multi-object tracking via lifted multicut over learned affinities."""

from .affinity import (
    AffinityConfig,
    AffinityModel,
    MatchTable,
    assemble_costs,
    edge_cost,
    fit_affinity_model,
    fit_logistic,
    generate_labels,
    iou_match_table,
    latent_codes,
    pair_probability,
    predict_p_same,
)
from .embedding import (
    ArchConfig,
    AutoEncoder,
    TrainingConfig,
    combined_loss,
    gradient_check,
    train,
)
from .graph import (
    BBox,
    Detection,
    EdgeLabeling,
    MulticutInstance,
    Partition,
    build_graph,
    iou,
    labeling_to_partition,
)
from .metrics import MotReport, evaluate_clear_mot
from .motio import (
    MotRecord,
    load_patches,
    read_mot,
    records_to_detections,
    save_patches,
    write_mot,
)
from .pipeline import (
    PipelineConfig,
    PipelineError,
    Track,
    TrackSet,
    Tracklet,
    clusters_to_tracks,
    fit_affinity_models,
    pregroup,
    read_config,
    run_tracking,
    train_embedding,
    write_config,
)
from .solver import (
    FeasibilityReport,
    is_feasible,
    objective,
    partition_to_labeling,
    read_instance,
    solve_bruteforce,
    solve_gaec,
    solve_kl,
    write_instance,
)
from .synth import SequenceSpec, SynthResult, benchmark_spec, synth_sequence

__version__ = "0.1.0"

__all__ = [
    "AffinityConfig",
    "AffinityModel",
    "ArchConfig",
    "AutoEncoder",
    "BBox",
    "Detection",
    "EdgeLabeling",
    "FeasibilityReport",
    "MatchTable",
    "MotRecord",
    "MotReport",
    "MulticutInstance",
    "Partition",
    "PipelineConfig",
    "PipelineError",
    "SequenceSpec",
    "SynthResult",
    "Track",
    "TrackSet",
    "Tracklet",
    "TrainingConfig",
    "assemble_costs",
    "benchmark_spec",
    "build_graph",
    "clusters_to_tracks",
    "combined_loss",
    "edge_cost",
    "evaluate_clear_mot",
    "fit_affinity_model",
    "fit_affinity_models",
    "fit_logistic",
    "generate_labels",
    "gradient_check",
    "iou",
    "iou_match_table",
    "is_feasible",
    "labeling_to_partition",
    "latent_codes",
    "load_patches",
    "objective",
    "pair_probability",
    "partition_to_labeling",
    "predict_p_same",
    "pregroup",
    "read_config",
    "read_instance",
    "read_mot",
    "records_to_detections",
    "run_tracking",
    "save_patches",
    "solve_bruteforce",
    "solve_gaec",
    "solve_kl",
    "synth_sequence",
    "train",
    "train_embedding",
    "write_config",
    "write_instance",
    "write_mot",
]
