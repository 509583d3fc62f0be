"""Multi-scale texture classification for grayscale cell images.

Pipeline: Gaussian scale stack -> local texture features (multi-scale
rotation-invariant LBP histograms, or dense oriented ring descriptors
encoded as Fisher vectors) -> linear one-vs-rest SVM, evaluated with
leave-one-specimen-out cross-validation.
"""

from .config import RunConfig, default_config
from .descriptors import (
    DESCRIPTOR_DIM,
    DescriptorSet,
    SamplingGrid,
    dense_sample,
    estimate_orientation,
    extract_all,
    load_at,
    load_descriptors,
    save_descriptors,
)
from .encoding import (
    EncoderModel,
    GMMModel,
    PCAModel,
    apply_pca,
    encode_fv,
    fisher_vector,
    fit_gmm,
    fit_pca,
    load_encoder,
    save_encoder,
)
from .errors import CelltexError, ConfigError, DataError, NumericError
from .evaluation import (
    CANONICAL_CLASSES,
    DatasetManifest,
    confusion_matrix,
    confusion_percentages,
    load_manifest,
    loso_splits,
    mca,
    run_loso,
    save_manifest,
    sweep_filter_counts,
)
from .image import GrayImage, enhance, load_image, save_image
from .lbp import (
    LBPConfig,
    gss_lbp_representation,
    lbp_code,
    lbp_histogram,
    riu2_bin,
)
from .scalespace import (
    Kernel2D,
    ScaleStack,
    ScaleStackConfig,
    build_scale_stack,
    convolve,
    gaussian_kernel,
    gaussian_value,
)
from .svm import (
    FeatureMatrix,
    SVMModel,
    decision_function,
    load_svm,
    predict,
    save_svm,
    train_svm,
)
from .synth import generate_corpus

__version__ = "0.1.0"
