"""Perturb-retrain benchmarks for feature-attribution methods.

Pixel-coordinate baselines (fixed-value masking with retraining, random-mask
proxy scoring, noisy linear imputation) and a geometric feature-perturbation
benchmark that shifts samples along their attribution vectors and projects
them back onto the data manifold with a deterministic diffusion sampler.
"""

__version__ = "0.1.0"

from .attribution import (Attribution, IntegratedGradients, InputGradient,
                          GradTimesInput, NoiseBlend, RandomDirection,
                          SmoothGrad, attr_grad, attr_grad_x_input,
                          attr_integrated_gradients, attr_random,
                          attr_smoothgrad, blend_with_noise,
                          ground_truth_from_linear)
from .datasets import (Dataset, GmmSpec, PitfallSpec, load_csv, make_gmm,
                       make_pitfall, random_rotation, rotate_dataset, split,
                       symmetric_gmm_spec)
from .diffusion import (CanonicalMap, DiffusionSchedule, GmmPrior,
                        ProjectionConfig, ddim_denoise, gmm_eps_predictor,
                        make_schedule, noise_signal_ratio, perturb_dataset,
                        project_to_manifold, strength_to_timestep)
from .evaluation import (AgreementScores, CorrelationTable, DegradationCurve,
                         agreement_scores, correlation_table,
                         cumulative_from_predictions, performance_drop_score,
                         rank_metrics, run_goar, topk_agreement)
from .models import (LinearModel, MLPClassifier, ModelParams, TrainConfig,
                     accuracy, fit_logistic, fit_mlp, forward, forward_batch,
                     init_mlp, input_gradient, input_gradients, train)
from .pixel import (evalx_train_proxy, road_impute, roar_impute,
                    run_pixel_strategy, top_k_mask)

__all__ = [name for name in dir() if not name.startswith("_")]
