"""Hyperparameter tuning for mixed sigmoid/Gaussian kernel SVMs.

Layers, bottom up: kernels, SMO training (svm), quantized parameter spaces
(space), the random-forest surrogate (forest), the asynchronous Bayesian
optimiser (tuner), range refinement (refine), datasets, the evaluation
database (perfdb) and the ``mktune`` command line (cli).
"""
from .errors import IntegrityError, InvalidInputError, MKTuneError, ParseError, RefusalError
from .kernels import KernelParams, gaussian_kernel, gram_matrix, mixed_kernel, sigmoid_kernel
from .perfdb import EvaluationRecord, PerformanceDatabase, best_record, running_best
from .refine import RefinementPolicy, analyze, prune_range, run_framework
from .space import ParameterDef, ParameterSpace, decode, default_space, encode, grid_enumerate, quantize, sample
from .svm import TrainSettings, train_binary, train_ovo
from .tuner import TunerSettings, lcb, propose, run_tuning

__version__ = "0.1.0"
