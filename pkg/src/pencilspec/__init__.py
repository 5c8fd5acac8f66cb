"""Forward and inverse spectral computations for a quadratic pencil
``-y'' + (2 lam p + q) y = lam^2 delta(x) y`` on ``[0, pi]`` with a
piecewise-constant weight and two transmission points."""

from .errors import (AllDiverged, BoundaryRoot, DomainError, IllConditioned, IncompleteSpectrum,
                     MaxIterations, NonConvergence, NonFinite, ParseError, PencilError,
                     ScanExhausted, SpecMismatch, StepFailure, UnboundedKernel, ValidationError)
from .forward import IntegratorSettings, char_fn, char_fn_batch, char_fn_derivative, phi, shoot
from .inverse import (HalfInverseReconstructor, ReconstructionConfig, ReconstructionReport,
                      constants_probe, reconstruct, residual_vector, uniqueness_probe)
from .model import (CosinePotentials, GridPotentials, JumpCondition, PiecewiseWeight,
                    ProblemSpec, SplicedPotentials, load_problem, make_spec, save_problem)
from .spectrum import Spectrum, SpectrumSolver, compute_spectrum

__version__ = "0.1.0"
