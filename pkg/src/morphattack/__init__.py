"""Black-box adversarial morphing attacks via learned flow-field bases.

Pipeline in three stages: query a classifier with warped probes to collect
perpetrating (image, flow) pairs, learn joint image/flow bases from the
successes, then assign each new image its own flow field and attack at a
controlled intensity.
"""

from .assign import (IntensitySpec, assign_proprietary_flow, project,
                     reconstruct_flow, sweep_specs, sweep_values)
from .attack import (AttackRecord, QuerySeed, QueryStageConfig, baseline_field,
                     is_success, run_attack_sweep, run_baseline_comparison,
                     run_open_set_attack, run_query_stage, run_transferability)
from .core import (FlowField, Image, RoiMask, crop_roi, flow_norm, flow_scale,
                   morph)
from .dictionary import (JointDictionary, TrainingPair, assemble_matrix,
                         learn_bases, learn_dictionary, load_dictionary,
                         save_dictionary)
from .fileio import read_flow, read_pgm, write_flow, write_pgm
from .flow import FlowEstimatorConfig, compose_flows, estimate_flow
from .metrics import (RocSummary, ScoreSet, bin_by_similarity, ncs, roc, ssim,
                      success_rate)
from .oracle import (BlackBoxOracle, CommandOracle, OracleVerdict, ToyFrModel,
                     load_model, save_model, train_toy)
from .synth import (DeformationSpec, IdentitySpec, build_world,
                    generate_identity, generate_sequence)

__version__ = "0.1.0"

__all__ = [
    "AttackRecord", "BlackBoxOracle", "CommandOracle", "DeformationSpec",
    "FlowEstimatorConfig", "FlowField", "IdentitySpec", "Image",
    "IntensitySpec", "JointDictionary", "OracleVerdict", "QuerySeed",
    "QueryStageConfig", "RocSummary", "RoiMask", "ScoreSet", "ToyFrModel",
    "TrainingPair", "assemble_matrix", "assign_proprietary_flow",
    "baseline_field", "bin_by_similarity", "build_world", "compose_flows",
    "crop_roi", "estimate_flow", "flow_norm", "flow_scale",
    "generate_identity", "generate_sequence", "is_success", "learn_bases",
    "learn_dictionary", "load_dictionary", "load_model", "morph", "ncs",
    "project", "read_flow", "read_pgm", "reconstruct_flow", "roc",
    "run_attack_sweep", "run_baseline_comparison", "run_open_set_attack",
    "run_query_stage", "run_transferability", "save_dictionary", "save_model",
    "ssim", "success_rate", "sweep_specs", "sweep_values", "train_toy",
    "write_flow", "write_pgm",
]
