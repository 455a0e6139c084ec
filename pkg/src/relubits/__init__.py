"""Detect adversarial inputs from the ReLU activation patterns of small fully-connected networks."""

from .attacks import AttackConfig, fgsm, iterated_attack, random_sign_noise
from .bitvec import BitVector, LayerLayout, bit_matrix, extract_bits, hamming, layer_slice
from .data import LabeledDataset, SplitSpec, load_idx, normalize, split, synth_blobs
from .detector import (
    DetectorModel,
    EvalReport,
    Thresholds,
    build_detector,
    classify,
    evaluate,
    select_sets,
    sweep,
)
from .errors import EmptyDiscriminatorError, ParseError, ShapeError
from .geometry import grid_census, is_hamming_neighbor, region_of, segment_walk
from .network import (
    ActivationTrace,
    NetworkSpec,
    TrainConfig,
    forward,
    init_network,
    input_gradient,
    load_model,
    loss,
    save_model,
    train,
)
from .stats import (
    ActivationDataset,
    FrequencyProfile,
    activation_frequency,
    common_bit_fraction,
    frequency_difference,
    frequency_histogram,
)

__version__ = "0.1.0"
