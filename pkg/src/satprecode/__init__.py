"""Multi-satellite downlink precoding laboratory.

Simulates a low-orbit multi-user downlink, evaluates analytical precoders
(centralized and distributed MMSE, robust SLNR), and trains a soft
actor-critic precoder on erroneous channel state information.
"""

from .channel import (ChannelRealization, CsitEstimate, CsitView,
                      GeometryRealization, ViewMode, apply_errors,
                      build_channel, draw_step, global_view, local_views,
                      place_constellation, steering_vector)
from .config import (ErrorConfig, ExperimentConfig, ScenarioConfig,
                     TrainConfig, single_sat_scenario, toy_scenario,
                     toy_train_config)
from .exceptions import (CheckpointError, ConfigError, MissingArtifactError,
                         NumericalError, PrecoderError)
from .metrics import (MeanRateResult, PrecodingMatrix, SumRateReport,
                      beam_pattern, mean_sum_rate, normalize_power, sum_rate)
from .precoders import (distributed_mmse, estimate_aod_cosine, limited_mmse,
                        local_mmse, make_precoder, mmse_precoder,
                        robust_slnr_precoder, slnr_autocorrelation)
from .rng import StreamBundle, stream
from .sac import (ReplayBuffer, SacAgent, Standardizer, build_agents,
                  hybrid_transform, input_transform, load_agents,
                  load_learned_precoder, output_transform, run_inference_step,
                  run_training, sample_action, warmup_standardizer)

__version__ = "0.1.0"
