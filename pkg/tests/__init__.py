from .test_matkernels import *
from .test_trs import *
from .test_saa import *
from .test_graphs import *
from .test_models import *
from .test_evaluation import *
from .test_datasets import *
from .test_config import *
from .test_runner_report import *
