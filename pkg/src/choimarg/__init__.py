"""Quantum channel marginal problems: compatibility, robustness, witnesses and tasks."""
from .channels import (QuantumChannel, StochasticChannel, apply, choi_from_kraus, classical_embedding,
                       cloning_channel, cnot_ancilla_channel, completely_depolarizing, depolarizing_channel,
                       ghz_marginal_channel, identity_channel, isotropic_w_channel, mix_channels,
                       prepare_channel, qc_channel_from_povm, swap_prepare_channel, unitary_channel, w_channel)
from .classical_cmp import (ClassicalScenario, classical_local_compatibility, classical_marginal,
                            classical_robustness, compose_chain, pr_box, pr_box_scenario)
from .cmp_sdp import (RobustnessReport, WitnessCertificate, build_dual, build_primal, feasibility_global,
                      is_compatible, robustness, verify_witness, witness_max_over_compatible, witness_value)
from .errors import *  # noqa: F401,F403
from .marginals import (LocalCompatibilityReport, MarginalScenario, OutputInputPair, broadcast_scenario,
                        extendibility_scenario, is_no_signaling, local_compatibility_check, marginal_channel,
                        product_channel, signaling_residual)
from .tensor_core import (DEFAULT_TOL, LabeledOperator, LabeledSpace, ToleranceConfig, kron_compose,
                          partial_trace, permute_factors)
from .witness_tasks import (ChannelFormWitness, DiscriminationTask, ProductDecomposition,
                            build_discrimination_task, channel_form_witness, compatible_success_max,
                            product_decompose, success_probability)

__version__ = "0.1.0"
