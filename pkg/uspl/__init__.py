from .constants import *
from .matkernels import *
from .trs import *
from .saa import *
from .graphs import *
from .models import *
from .evaluation import *
from .datasets import *
from .config import *
from .report import *
from .runner import *
