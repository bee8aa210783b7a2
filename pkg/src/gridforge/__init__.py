"""gridforge: 2D occupancy-grid SLAM from 3D LiDAR with pluggable map cleaning.

Building blocks: point-cloud filtering (`pointcloud`), azimuth projection
(`projection`), Generalized-ICP odometry with a keyframe submap (`gicp`),
log-odds occupancy mapping (`mapping`), the cleaning filter chain
(`mapfilter`), generator inference and the morphological baseline
(`cleaner`), synthetic erroneous-map generation (`errorsim`), scoring
(`metrics`), and the end-to-end session (`session`). The `gridforge`
console script drives replayed sequences, standalone cleaning, dataset
generation, and evaluation.
"""

from .cleaner import MorphologicalCleaner, NeuralCleaner, clean_image, clean_map, forward
from .errorsim import ErrorConfig, FloorPlan, SamplePair, augment, explore_and_map, generate_dataset, generate_floorplan
from .gicp import (
    RegistrationError,
    Submap,
    estimate_covariances,
    gicp_residual,
    maybe_add_keyframe,
    register_scan_to_scan,
    register_scan_to_submap,
)
from .gridimage import FREE, OCCUPIED, UNEXPLORED, GridImage
from .gsm import GeneratorModel, LayerSpec, load_generator, save_generator, tiny_preset_layers
from .mapfilter import confidence_filter, remove_floaters, resize_for_model, restore_from_model
from .mapping import OccupancyGrid, PoseTrail
from .metrics import EvalReport, evaluate_pair, iou, ssim
from .pointcloud import PointCloud3D, box_filter, load_pointcloud, voxel_downsample
from .projection import LaserScan2D, project_to_2d
from .se3 import Pose2D, SE3Transform, se3_to_pose2d
from .session import Session, SessionConfig, run_sequence

__version__ = "0.1.0"
