"""Statistical counterexample generator for epsilon-differential privacy."""

from .core import (
    AdjacentInputPair,
    Cat,
    Category,
    InvalidParameterError,
    Mechanism,
    MechanismArgs,
    MechanismOutput,
    QueryAnswerVector,
    exponential_sample,
    laplace_sample,
)
from .detector import DetectionConfig, DetectionResult, detect, sweep
from .events import build_search_space, classify_output_kind, parse_event, select_event
from .inputs import generate_arguments, generate_databases, input_list
from .mechanisms import REGISTRY, get_mechanism
from .stats import hypergeom_cdf, hypothesis_test, pvalue

__all__ = [
    "AdjacentInputPair", "Cat", "Category", "InvalidParameterError", "Mechanism",
    "MechanismArgs", "MechanismOutput", "QueryAnswerVector", "exponential_sample",
    "laplace_sample", "DetectionConfig", "DetectionResult", "detect", "sweep",
    "build_search_space", "classify_output_kind", "parse_event", "select_event",
    "generate_arguments", "generate_databases", "input_list", "REGISTRY", "get_mechanism",
    "hypergeom_cdf", "hypothesis_test", "pvalue",
]

__version__ = "0.1.0"
