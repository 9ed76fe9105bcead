"""Predictor-corrector online learning: base learners, model-based predictions, audits."""
from .errors import (ConfigError, DomainError, NumericAbort, NumericError, PiccoloError,
                     StructuralError, UnsupportedError)
from .geometry import (Box, BregmanGeometry, DiagonalQuadratic, FisherQuadratic, L2Ball,
                       NegativeEntropy, ProductSimplex, SquaredEuclidean, WeightSchedule,
                       bregman, project, weight)
from .base_alg import (FTRL, AdaGrad, Adam, AdaNatGrad, BasicMD, LearnerState, RegularizerState,
                       adapt, make_algorithm, mirror_step_audit, project_decision, update)
from .meta import MetaMode, Mode, RunResult, correction_step, prediction_step, run, shift
from .models import FixedPointConfig, fixed_point_predict, make_model, model_update, predict
from .analysis import audit_regret_bound, audit_theorem1, comparator, fit_rate, regret

__version__ = "0.1.0"
