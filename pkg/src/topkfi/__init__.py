"""Sampling-based mining of approximate top-K frequent itemsets."""

from .cmsketch import CountMinFilter, run_progressive_cm
from .dataset import (
    SampleSpec,
    TransactionDataset,
    gen_lowerbound_dataset,
    gen_planted_dataset,
    gen_zipf_dataset,
    parse_fimi,
    read_fimi,
    sample_with_replacement,
    write_fimi,
)
from .errors import DataError, ParameterError, ResourceLimitError, TopKError
from .miner import CountTable, TopKResult, count_itemsets, enumerate_itemsets, rank_frequency, top_k
from .progressive import MiningOutcome, run_progressive
from .schedule import ApproxParams, PhaseSchedule, bucket_widths, fact1_bounds, phase_size, theorem1_size, universe_count

__version__ = "0.1.0"

__all__ = [
    "ApproxParams",
    "CountMinFilter",
    "CountTable",
    "DataError",
    "MiningOutcome",
    "ParameterError",
    "PhaseSchedule",
    "ResourceLimitError",
    "SampleSpec",
    "TopKError",
    "TopKResult",
    "TransactionDataset",
    "bucket_widths",
    "count_itemsets",
    "enumerate_itemsets",
    "fact1_bounds",
    "gen_lowerbound_dataset",
    "gen_planted_dataset",
    "gen_zipf_dataset",
    "parse_fimi",
    "phase_size",
    "rank_frequency",
    "read_fimi",
    "run_progressive",
    "run_progressive_cm",
    "sample_with_replacement",
    "theorem1_size",
    "top_k",
    "universe_count",
    "write_fimi",
]
