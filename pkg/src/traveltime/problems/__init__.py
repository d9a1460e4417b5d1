"""Problem configurations: expression language, TOML I/O and shipped examples."""

from .config import ProblemConfig, Region, dump_config, load_config, loads
from .examples import BUILDERS, example_I, example_II, example_III, shipped
from .expressions import Expression

__all__ = ["ProblemConfig", "Region", "Expression", "load_config", "dump_config", "loads",
           "example_I", "example_II", "example_III", "shipped", "BUILDERS"]
