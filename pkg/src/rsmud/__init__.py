"""Multiuser detection for random-access channels where the set of active
users is a finite random set evolving as a birth/death Markov chain."""

from .randset import (BeliefTable, SetDensity, SlotState, Universe,
                      belief_from_density, convolve_union, density_from_belief,
                      normalize)
from .traffic import (TrafficModel, birth_kernel, static_prior,
                      stationary_activity, survival_kernel, transition_density)
from .channel import (ChannelModel, SignatureSet, build_signatures,
                      correlation_matrix, kasami_small_set, log_likelihood,
                      msequence, synthesize_observation)
from .detect import (FilterState, bayes_predict, bayes_update,
                     causal_map_sequence, classic_all_active_ml,
                     sliding_window_viterbi, static_map_detect,
                     viterbi_sequence_map)
from .analysis import (PairContext, pair_from_states, pep, q_function,
                       semianalytic_dynamic_bound, t_min_open_eye,
                       union_bound_static, xi_eta)
from .harness import (ExperimentConfig, MetricRecord, compute_metrics,
                      preset_configs, run_experiment)

__version__ = "0.1.0"
