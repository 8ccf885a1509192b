"""Instance-optimal quantum state certification: simulation and validation tools."""

from .certify import CertifyConfig, Verdict, basic_certify, certify, conditional_source
from .classical import SampleCounts, chi_squared, l2_two_sample_test, l23_functional, tv_distance
from .haar_oracle import (
    Permutation,
    WeingartenTable,
    exact_transcript_divergence,
    haar_moment,
    ingster_bound,
    verify_moments_basic,
    weingarten_table,
)
from .instances import (
    CornerInstance,
    OffDiagInstance,
    PaninskiInstance,
    build_corner,
    build_offdiag,
    plan_offdiag,
    sample_paninski,
    tune_paninski,
)
from .linalg import (
    DensityMatrix,
    fidelity_mm,
    hermitian_eig,
    is_psd,
    schatten_quasinorm,
    schur_psd_check,
    trace_distance,
)
from .measurement import (
    CopySource,
    NonadaptiveSchedule,
    Povm,
    Transcript,
    basis_povm,
    likelihood_g,
    outcome_distribution,
    phi,
    project_povm_to_blocks,
)
from .rng import RngHandle, block_haar, haar_isometry, haar_unitary, sample_discrete
from .spectrum import (
    BucketDecomposition,
    Spectrum,
    bucketize,
    predicted_bounds,
    remove_mass_adaptive,
    remove_mass_lower_nonadaptive,
    remove_mass_upper,
)

__version__ = "0.1.0"
