"""Joint beamforming and reflection-phase allocation for multicell MISO OFDMA
downlinks serving short-packet users under finite-blocklength QoS targets."""

from .channel import (ChannelRealization, cascaded_path_loss, direct_path_loss,
                      generate_realization, sample_small_scale, sample_topology)
from .config import (PathLossParams, PenaltySchedule, SweepSpec, SystemConfig,
                     Topology, config_from_dict, desk_scale_config, load_config)
from .fbl import (QosTarget, all_sinrs, dispersion, packet_bits, q_function,
                  q_inverse, sinr, v_max_total, v_max_user)
from .lifting import (extract_rank_one, lifted_power, phase_lift_vector,
                      phases_from_v, stack_all, stacked_channel)
from .solver import (ConicSubproblem, QosReport, SolveResult,
                     assemble_subproblem, check_solution, run_algorithm1,
                     smallest_eigvecs, solve_subproblem)
from .baselines import no_irs, proposed, random_phase, run_scheme, shannon_bound
from .harness import (ExperimentRecord, aggregate, emit_results, load_records,
                      run_convergence, run_experiment, run_single)

__version__ = "0.1.0"
