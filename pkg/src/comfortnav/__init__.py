"""Self-supervised terrain traversability toolkit.

A synthetic world produces vehicle-state logs and first-person terrain
views; vibration spectra become traversal-cost labels; a regressor maps
patch texture features to spectra and costs; predictions aggregate into
ground-plane costmaps that a trajectory-library planner consumes; and
ride comfort is scored with perceived-motion-intensity metrics.
"""

from .clustering import (ClusterModel, EncoderConfig, SpectrumEncoder, cluster_accuracy,
                         cluster_states, nmi, train_spectrum_encoder)
from .comfort import (PmiReport, PmiWeights, normalize_pmi, pmi, pmi_report, spearman)
from .config import PipelineConfig
from .cost import (ClassSpectralStats, CostLabel, CostNormalization, assign_weights,
                   class_means, normalize_costs, traversal_cost)
from .costmap import Costmap, GridSpec, build_costmap, load_costmap, save_costmap
from .features import texture_feature
from .geometry import (CameraModel, Extrinsics, Footprint, GroundPlane, bev_homography,
                       crop_patch, project_footprints, warp_image_to_bev, warp_point)
from .learning import (RegressorModel, TrainConfig, load_model, loss, predict,
                       save_model, smooth_l1, spectrum_mse, train)
from .planner import (TrajectoryCandidate, default_library, make_arc, plan,
                      score_trajectory)
from .signals import (AmplitudeSpectrum, SignalWindow, StateLog, VehicleStateSample,
                      amplitude_spectrum, read_state_log, window_states, write_state_log)
from .simworld import (CameraRig, DriveResult, ExportParams, TerrainClassSpec, WorldMap,
                       default_classes, default_rig, export_dataset, harvest_records,
                       render_view, simulate_drive, striped_world, two_corridor_world)

__version__ = "0.1.0"
