"""Compressive sketching, estimation and efficiency analysis for single-photon lidar.

Photon time stamps are compressed online into a small vector of empirical
characteristic function samples at background-blind orthogonal frequencies;
depth and intensity are then estimated from the sketch alone.  The library
also provides the classical full-data baselines (matched filter, EM), the
coarse-binning compression baseline, and Fisher-information tooling to
quantify how much estimation accuracy a given sketch size gives up.
"""

from .model import (ImpulseResponse, ModelParams, gaussian_irf, irf_cf,
                    irf_from_samples, model_cf, model_pmf, params_from_sbr)
from .simulate import LidarCube, PhotonStream, sample_photons, simulate_cube, split_seed
from .sketch import (EmptySketchError, FrequencySet, Sketch, SketchState,
                     random_frequencies, sketch_from_histogram, sketch_stream,
                     truncated_frequencies)
from .estimate import (CoarseHistogram, FitResult, MissingFrequencyError,
                       NonFiniteLossError, UndefinedPhaseError, circular_mean,
                       coarse_bin, coarse_em, coarse_matched_filter, covariance,
                       em_fit, ifft_estimate, matched_filter, max_peak,
                       model_sketch, smle_fit, smle_loss, smle_loss_grad)
from .analysis import (EfficiencyReport, NonIdentifiableError, SingularModelError,
                       circular_distance, circular_mean_std, crb_rmse,
                       detection_rate, efficiency_report, fim_coarse, fim_full,
                       fim_sketch, rep, rep_coarse, rmse, rmse_ratio)

__version__ = "0.1.0"
