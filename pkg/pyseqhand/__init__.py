"""pyseqhand: sequential synthetic hand-pose datasets, like a static pose corpus but in motion"""

from .camera import CameraParams, project_weak, rodrigues
from .colors import ColorTemplate, SkinTone, TEMPLATES
from .coords import Box, crop_square
from .dataset import DatasetManifest, GenJob, InspectReport, generate_dataset, inspect_dataset
from .errors import *
from .handmodel import (
    HandMesh,
    HandModel,
    HandPose,
    HandShape,
    PoseBasis,
    default_model,
    fit_pose_params,
    joints_fk,
    load_hand_model,
    mesh_lbs,
    pose_pca_fit,
    pose_pca_project,
    pose_pca_reconstruct,
    shape_skeleton,
)
from .metrics import PckCurve, auc, evaluate, mean_error, pck3d
from .objectives import LossWeights, loss_total_real, loss_total_seqhand
from .posedb import PoseDB, PoseIndex, PoseRecord, build_index, load_db, nn_query, save_db
from .poseflow import CameraBounds, FlowConfig, FlowFrame, PoseFlowSeq, generate_flow, sequence_rng
from .profiler import Profiler
from .render import Raster, composite, rasterize

from . import objectives, poseflow, render
