from __future__ import annotations

from enum import Enum

#
# solver defaults
#

RIDGE                = 1e-6
JITTER_LADDER        = (0.0, 1e-12, 1e-10, 1e-8, 1e-6)
DENSE_TRS_THRESHOLD  = 500
DENSE_TRS_TOL        = 1e-10
LANCZOS_TRS_TOL      = 1e-8
MAX_LANCZOS_DIM      = 300
MAX_NEWTON_ITER      = 200
HARD_CASE_TOL        = 1e-10
SAA_TOL              = 1e-10
SAA_MAX_SWEEPS       = 100
SAA_RESTARTS         = 3

#
# experiment protocol defaults
#

TRAIN_RATIO          = 0.5
PAIRED_RATIO         = 0.2
LABELED_RATIO        = 0.1
TRIALS               = 10
SIGNIFICANT_DIGITS   = 15

GAMMA_GRID      = (0.01, 0.05, 0.1, 0.5, 0.9, 0.95, 0.99)
GAMMA2_GRID     = (1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0, 1000.0)
ETA_GRID        = (1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0, 1000.0)
HEAT_SCALE_GRID = (0.25, 0.5, 1.0, 2.0, 4.0)
NEIGHBOR_GRID   = (3, 5, 7, 10, 20)
K_RANGE         = (2, 3, 4, 5, 6)

WORKERS_ENV = "USPL_WORKERS"

#
# multiple features (mfeat) distribution
#

MFEAT_VIEWS: dict[str, int] = {
    "fac": 216,
    "fou": 76,
    "kar": 64,
    "mor": 6,
    "pix": 240,
    "zer": 47,
}
MFEAT_SAMPLES       = 2000
MFEAT_CLASS_SIZE    = 200
MFEAT_FILE_PREFIX   = "mfeat-"


class ModelFamily(str, Enum):
    CCA      = "CCA"
    SEMICCA  = "SemiCCA"
    USEMICCA = "USemiCCA"
    SEMICCALR  = "SemiCCALR"
    USEMICCALR = "USemiCCALR"
    SCCA     = "SCCA"
    USCCA    = "USCCA"
    S2GCA    = "S2GCA"
    US2GCA   = "US2GCA"
    S2CCALR  = "S2CCALR"
    US2CCALR = "US2CCALR"

    @property
    def uncorrelated(self) -> bool:
        return self in UNCORRELATED_FAMILIES

    @property
    def supervised(self) -> bool:
        return self in SUPERVISED_FAMILIES

    @property
    def laplacian_regularized(self) -> bool:
        return self in LAPLACIAN_FAMILIES


UNCORRELATED_FAMILIES = frozenset({
    ModelFamily.USEMICCA, ModelFamily.USEMICCALR, ModelFamily.USCCA,
    ModelFamily.US2GCA, ModelFamily.US2CCALR,
})

SUPERVISED_FAMILIES = frozenset({
    ModelFamily.SCCA, ModelFamily.USCCA, ModelFamily.S2GCA,
    ModelFamily.US2GCA, ModelFamily.S2CCALR, ModelFamily.US2CCALR,
})

LAPLACIAN_FAMILIES = frozenset({
    ModelFamily.SEMICCALR, ModelFamily.USEMICCALR,
    ModelFamily.S2CCALR, ModelFamily.US2CCALR,
})

# hyperparameters tuned per family, besides the graph parameters of the
# supervised ones and the target dimension k
FAMILY_PARAMS: dict[ModelFamily, tuple[str, ...]] = {
    ModelFamily.CCA:        (),
    ModelFamily.SEMICCA:    ("gamma",),
    ModelFamily.USEMICCA:   ("gamma",),
    ModelFamily.SEMICCALR:  ("gamma1", "gamma2", "heat_scale"),
    ModelFamily.USEMICCALR: ("gamma1", "gamma2", "heat_scale"),
    ModelFamily.SCCA:       ("eta",),
    ModelFamily.USCCA:      ("eta",),
    ModelFamily.S2GCA:      ("gamma", "eta"),
    ModelFamily.US2GCA:     ("gamma", "eta"),
    ModelFamily.S2CCALR:    ("gamma1", "gamma2", "heat_scale", "eta"),
    ModelFamily.US2CCALR:   ("gamma1", "gamma2", "heat_scale", "eta"),
}


class GraphKind(str, Enum):
    LDA  = "LDA"
    LFDA = "LFDA"
    MFA  = "MFA"


GRAPH_PARAMS: dict[GraphKind, tuple[str, ...]] = {
    GraphKind.LDA:  (),
    GraphKind.LFDA: ("knn",),
    GraphKind.MFA:  ("knn", "knn_penalty"),
}


class TestedView(str, Enum):
    __test__ = False  # not a pytest test class

    CONCAT = "concat"
    VIEW1  = "view1"
    VIEW2  = "view2"


class NncTraining(str, Enum):
    AUTO    = "auto"
    LABELED = "labeled"
    ALL     = "all"


#
# record and configuration keys
#


class Keys:
    class Trial:
        VIEW_PAIR   = "view_pair"
        TRAIN_RATIO = "train_ratio"
        FAMILY      = "family"
        GRAPH       = "graph"
        PARAMS      = "params"
        SEED        = "seed"
        K           = "k"
        TESTED_VIEW = "tested_view"
        ACCURACY    = "accuracy"
        OBJECTIVE   = "objective"

    class Summary:
        VIEW_PAIR   = "view_pair"
        TRAIN_RATIO = "train_ratio"
        FAMILY      = "family"
        GRAPH       = "graph"
        MEAN        = "mean"
        STD         = "std"
        PARAMS      = "params"
        K           = "k"
        TRIALS      = "trials"
        TESTED_VIEW = "tested_view"

    class Output:
        TRIALS         = "trials.jsonl"
        PARTIAL        = "trials.partial.jsonl"
        SUMMARY        = "summary.tsv"
        RESUME_MARKER  = "RUNNING"
