"""Small spiking-network training engine with hand-rolled backprop through time.

Five neuron models share one leaky integrate-and-fire forward family; they
differ in how gradients reach the weights. Everything runs on dense
float64 arrays, deterministically for a given seed.
"""

from .bptt import (
    BpttTape,
    GradcheckReport,
    GradientSet,
    aia_update_from_drive,
    aia_update_gated_sum,
    backward,
    backward_aia,
    backward_cached_aia,
    backward_lif,
    backward_plif,
    forward_record,
    gradcheck,
)
from .data import (
    Dataset,
    EventRecord,
    bin_events,
    gen_poisson_patterns,
    load_dataset_cache,
    load_events_csv,
    save_dataset_cache,
)
from .errors import (
    CacheMismatchError,
    ConfigError,
    DataError,
    DimensionError,
    EmptyInputError,
    EmptySampleError,
    NumericError,
    SpikeKitError,
    StateError,
    TrainingDiverged,
)
from .network import (
    Layer,
    Network,
    init_network,
    load_checkpoint,
    merge_beta,
    readout_and_loss,
    save_checkpoint,
    softmax,
)
from .neurons import (
    MODELS,
    NeuronParams,
    NeuronState,
    aia_step,
    cached_aia_step,
    if_step,
    lif_step,
    plif_step,
    step,
    surrogate_spike_derivative,
)
from .training import (
    Adam,
    EvalResult,
    RunMetrics,
    TrainConfig,
    evaluate,
    spike_count_report,
    train,
    weight_shift_report,
)

__version__ = "0.1.0"

__all__ = [
    "Adam",
    "BpttTape",
    "CacheMismatchError",
    "ConfigError",
    "DataError",
    "Dataset",
    "DimensionError",
    "EmptyInputError",
    "EmptySampleError",
    "EvalResult",
    "EventRecord",
    "GradcheckReport",
    "GradientSet",
    "Layer",
    "MODELS",
    "Network",
    "NeuronParams",
    "NeuronState",
    "NumericError",
    "RunMetrics",
    "SpikeKitError",
    "StateError",
    "TrainConfig",
    "TrainingDiverged",
    "aia_step",
    "aia_update_from_drive",
    "aia_update_gated_sum",
    "backward",
    "backward_aia",
    "backward_cached_aia",
    "backward_lif",
    "backward_plif",
    "bin_events",
    "cached_aia_step",
    "evaluate",
    "forward_record",
    "gen_poisson_patterns",
    "gradcheck",
    "if_step",
    "init_network",
    "lif_step",
    "load_checkpoint",
    "load_dataset_cache",
    "load_events_csv",
    "merge_beta",
    "plif_step",
    "readout_and_loss",
    "save_checkpoint",
    "save_dataset_cache",
    "softmax",
    "spike_count_report",
    "step",
    "surrogate_spike_derivative",
    "train",
    "weight_shift_report",
]
