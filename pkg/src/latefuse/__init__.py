"""Late-fusion neural operator surrogates for parameterized PDEs."""

__version__ = "0.1.0"

from .equations import (Advection, Burgers, ReactionDiffusion1D,  # noqa: F401
                        ReactionDiffusion2D)
from .grids import GridSpec, InitialConditionSpec, SineWaveIC  # noqa: F401
from .library import (LateFusionModel, LibrarySpec, evaluate_library,  # noqa: F401
                      late_fusion_step, parse_library_spec, split_residual)
from .models import ArchConfig, BaselineModel, FNOBackbone  # noqa: F401
from .solvers import Trajectory, solve_trajectory  # noqa: F401
from .tensor import Tensor, no_grad  # noqa: F401
