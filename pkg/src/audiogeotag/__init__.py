"""City-of-origin retrieval for audio from its urban sound-class composition.

The pipeline decomposes recordings against per-sound-class bases learned
by semi-nonnegative matrix factorization, summarizes the composition
weights into clip-level histograms, fuses per-class exponential
chi-squared kernels, and ranks recordings per city with kernel SVMs.
"""

from .dataset import (
    AudioClip,
    DatasetManifest,
    ManifestEntry,
    decode_wav,
    load_manifest,
    resample_to_16k,
    write_manifest,
)
from .evaluate import EvalReport, average_precision, build_report, mean_average_precision
from .features import MfccConfig, compute_deltas, compute_mfcc, extract_mfca
from .featurize import boaw_feature, h_feature, supervector_feature, v_feature
from .gmm import DiagonalGMM, EmOptions, fit_gmm
from .kernels import (
    KernelMatrix,
    average_pairwise_gamma,
    chi2_distance,
    cross_exp_chi2,
    cross_linear_kernel,
    exp_chi2_kernel,
    fuse_average,
    fuse_product,
    linear_kernel,
)
from .seminmf import (
    FactorizationOptions,
    SemiNMF,
    infer_weights,
    init_factors,
    learn_basis,
    objective,
    pos_neg_parts,
    update_basis,
    update_weights,
)
from .svm import CvConfig, KernelSVM, SvmModel, cross_validate_C, decision_values, train_svm
from .synthgen import SynthSpec, gen_city_dataset, gen_class_data, write_dataset
from .config import PipelineConfig, load_config
from .pipeline import cmd_featurize, cmd_train_and_eval, cmd_train_basis, run_all

__version__ = "0.1.0"
