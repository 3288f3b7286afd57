"""Evidence engine: independence checks, suites and demonstrations."""

from .ci import CiReport, ci_check, ci_deviation
from .demos import FccReport, ImpossibilityReport, fcc_violation_demo, impossibility_demo, op_rank
from .suites import (CaseResult, SuiteResult, THEOREM_INSTANCES, lemma_suite, markov_check, markov_suite,
                     nft_typicality, theorem_case_suite, theorem_instance)

__all__ = [
    "CiReport", "ci_check", "ci_deviation", "FccReport", "ImpossibilityReport", "fcc_violation_demo",
    "impossibility_demo", "op_rank", "CaseResult", "SuiteResult", "THEOREM_INSTANCES", "lemma_suite",
    "markov_check", "markov_suite", "nft_typicality", "theorem_case_suite", "theorem_instance",
]
