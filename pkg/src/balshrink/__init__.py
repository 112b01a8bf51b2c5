"""Shrinkage estimation of a location vector under balanced losses.

Modules:

* :mod:`balshrink.kernels` - concave loss kernels and balanced loss families;
* :mod:`balshrink.mixtures` - scale mixtures of normals and tilted versions;
* :mod:`balshrink.estimators` - Baranchik-type and balanced Bayes estimators;
* :mod:`balshrink.cutoffs` - dominance bounds on the shrinkage multiplier;
* :mod:`balshrink.risk` - paired Monte Carlo risk and dominance scans;
* :mod:`balshrink.diagnostics` - numerical certificates of structural facts;
* :mod:`balshrink.cli` - configuration-driven experiment runner.
"""

__version__ = "0.1.0"

from .cutoffs import (  # noqa: E402
    CutoffReport,
    cutoff_ell_balanced,
    cutoff_normal_known_scale,
    cutoff_normal_unknown_scale,
    cutoff_rho_balanced,
    cutoff_squared_error_mixture,
    radial_expectation,
    tilted_inverse_moment_check,
)
from .estimators import (  # noqa: E402
    Baranchik,
    BayesBalanced,
    NormalConjugateBayes,
    ShrinkFunction,
    TargetX,
    UnknownVarianceBaranchik,
    bayes_combine,
    estimate,
    james_stein,
)
from .kernels import Kernel, LossSpec, eval_loss, loss_difference_delta, validate_kernel  # noqa: E402
from .mixtures import MixtureModel, TiltedModel, sample, sample_tilted  # noqa: E402
from .risk import dominance_scan, mc_risk, mc_risk_difference, unknown_variance_scan  # noqa: E402
