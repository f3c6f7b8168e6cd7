from .basis import BasisSpec, Interval, build_legendre_basis, infer_bases
from .wavelet import WaveletPlan, transform_samples, inverse_transform_samples
from .topology import TreeTopology, build_tree_1d, build_tree_2d
from .ftn import FtnModel, eval_density, correlation_original
from .estimator import fit

__version__ = "0.1.0"
