"""Evaluation: judge scoring, n-gram metrics, agreement, ranking and MCQA accuracy."""

from .judge import AXES, JudgeScore, judge_caption, judge_many, mean_scores, parse_judge_reply
from .mcqa import letter_logprobs, letter_token, mcqa_accuracy, mcqa_answer
from .ngram import METEOR_LITE, ROUGE_L, NgramScore, lcs_length, meteor_lite, rouge_l
from .onpolicy import (
    PairwiseVerdict,
    PreferencePair,
    Verdict,
    build_comparison_pairs,
    candidate_pairs,
    compare_responses,
    head_to_head,
    rlaifv_f1,
)
from .ranking import RankingAccuracy, ranking_accuracy, ranking_accuracy_from_scores
from .reports import read_csv, write_csv, write_report
from .stats import spearman

__all__ = [
    "AXES",
    "METEOR_LITE",
    "ROUGE_L",
    "JudgeScore",
    "NgramScore",
    "PairwiseVerdict",
    "PreferencePair",
    "RankingAccuracy",
    "Verdict",
    "build_comparison_pairs",
    "candidate_pairs",
    "compare_responses",
    "head_to_head",
    "judge_caption",
    "judge_many",
    "lcs_length",
    "letter_logprobs",
    "letter_token",
    "mcqa_accuracy",
    "mcqa_answer",
    "mean_scores",
    "meteor_lite",
    "parse_judge_reply",
    "ranking_accuracy",
    "ranking_accuracy_from_scores",
    "read_csv",
    "rlaifv_f1",
    "rouge_l",
    "spearman",
    "write_csv",
    "write_report",
]
