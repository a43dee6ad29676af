"""Tensor-network toolkit for multi-time processes of open quantum systems.

The package builds process tensors of system-environment models in
matrix-product operator form, evaluates memory measures on them (operational
entanglement across a time cut, and the entropy of the effective environment
state), and fits hidden Markovian models to a target process by gradient
descent on the ansatz tensors.
"""

from .channels import (
    ChannelTensor,
    CPTPReport,
    KrausChannel,
    LindbladSpec,
    apply_channel,
    check_cptp,
    choi_matrix,
    identity_channel,
    kraus_to_w,
    lindblad_superoperator,
    random_cptp_channel,
    superop_to_kraus,
    unitary_channel,
)
from .measures import (
    EnvState,
    MeasureSeries,
    env_state,
    measure_series,
    memory_complexity,
    nm_ee,
    osee,
)
from .models import (
    SIGMA_MINUS,
    SIGMA_PLUS,
    SIGMA_X,
    SIGMA_Y,
    SIGMA_Z,
    UQDMModel,
    UQDMParams,
    XXChainParams,
    ruqdm_channel,
    uqdm_coherence,
    uqdm_env_entropy,
    uqdm_memory_series,
    uqdm_model,
    uqdm_overlaps,
    xx_chain_hamiltonian,
    xx_chain_liouvillian,
    xx_chain_model,
    xx_chain_unitary,
)
from .process_tensor import (
    ChoiTensor,
    ContainmentReport,
    MaterializationLimitError,
    OperationSequence,
    ProcessTensorMPDO,
    apply,
    build,
    check_containment,
    expectation,
    expectation_do_nothing,
    gauge_transform_env,
    identity_superop,
    inner_product,
    local_expectation_averaged,
    materialize,
    measure_prepare_superop,
    norm_sq,
)
from .tensorops import (
    LabeledTensor,
    Spectrum,
    check_density_matrix,
    check_hermitian,
    check_unitary,
    contract,
    eig_hermitian,
    matrix_exp,
    renyi_entropy,
    svd_split,
    von_neumann_entropy,
)

__version__ = "0.1.0"

__all__ = [
    "ChannelTensor",
    "ChoiTensor",
    "ContainmentReport",
    "CPTPReport",
    "EnvState",
    "KrausChannel",
    "LabeledTensor",
    "LindbladSpec",
    "MaterializationLimitError",
    "MeasureSeries",
    "OperationSequence",
    "ProcessTensorMPDO",
    "SIGMA_MINUS",
    "SIGMA_PLUS",
    "SIGMA_X",
    "SIGMA_Y",
    "SIGMA_Z",
    "Spectrum",
    "UQDMModel",
    "UQDMParams",
    "XXChainParams",
    "apply",
    "apply_channel",
    "build",
    "check_containment",
    "check_cptp",
    "check_density_matrix",
    "check_hermitian",
    "check_unitary",
    "choi_matrix",
    "contract",
    "eig_hermitian",
    "env_state",
    "expectation",
    "expectation_do_nothing",
    "gauge_transform_env",
    "identity_channel",
    "identity_superop",
    "inner_product",
    "kraus_to_w",
    "lindblad_superoperator",
    "local_expectation_averaged",
    "materialize",
    "matrix_exp",
    "measure_prepare_superop",
    "measure_series",
    "memory_complexity",
    "nm_ee",
    "norm_sq",
    "osee",
    "random_cptp_channel",
    "renyi_entropy",
    "ruqdm_channel",
    "superop_to_kraus",
    "svd_split",
    "unitary_channel",
    "uqdm_coherence",
    "uqdm_env_entropy",
    "uqdm_memory_series",
    "uqdm_model",
    "uqdm_overlaps",
    "von_neumann_entropy",
    "xx_chain_hamiltonian",
    "xx_chain_liouvillian",
    "xx_chain_model",
    "xx_chain_unitary",
    "__version__",
]
