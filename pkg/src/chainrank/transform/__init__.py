"""Question-answer views of caption chains: multiple choice and yes/no."""

from .qa import (
    McqItem,
    YnqChain,
    chain_to_mcq,
    chain_to_ynq,
    mcq_rank_target,
    read_mcq,
    read_ynq,
    write_mcq,
    write_ynq,
)

__all__ = [
    "McqItem",
    "YnqChain",
    "chain_to_mcq",
    "chain_to_ynq",
    "mcq_rank_target",
    "read_mcq",
    "read_ynq",
    "write_mcq",
    "write_ynq",
]
