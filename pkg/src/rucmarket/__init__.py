"""Day-ahead market clearing with robust unit commitment, uncertainty pricing
and settlement audits."""
__version__ = "0.1.0"

from .case import CaseSystem, load_case, load_sixbus
from .ccg import run_ccg
from .market import clear_market, compare_with_traditional

__all__ = ["CaseSystem", "load_case", "load_sixbus", "run_ccg", "clear_market", "compare_with_traditional",
           "__version__"]
