from .dataset import CaseDataset, read_cases, write_cases
from .em import FitReport, em_fit
from .structure import (
    ConstraintSet,
    Pdag,
    chi_square_ci_test,
    learn_structure,
    parse_constraints,
)
from .synthetic import aa_constraints, aa_ground_truth, synth_aa_data, AA_CALIBRATION_TARGETS
