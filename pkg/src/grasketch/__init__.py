"""Grassmannian kernels, rank-one-projection sketches, and subspace classification."""

from grasketch.subspace import (
    Subspace,
    PrincipalAngles,
    DimensionError,
    random_subspace,
    perturb_subspace,
    principal_angles,
    geodesic_distance,
    pair_with_angles,
)
from grasketch.kernels_exact import (
    GramMatrix,
    projection_kernel,
    binet_cauchy_kernel,
    gram_matrix,
)
from grasketch.sketch import (
    RopEnsemble,
    RealSketch,
    BitSketch,
    EnsembleMismatchError,
    rop_sketch,
    rop_sketch_many,
    sign_sketch,
    binarise,
    pm1_dot,
    write_sketch,
    read_sketch,
)
from grasketch.kernels_approx import (
    kappa1_approx,
    kappa2_approx,
    kappa2_symmetrised,
    kappa3_approx,
    expected_kappa,
    c_k,
    approx_gram,
)

__version__ = "0.1.0"
