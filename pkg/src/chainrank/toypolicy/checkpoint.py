"""Plain-text checkpoint format for ToyPolicy.

Line 1 is the header ``chainrank-toypolicy <version>``; line 2 is a JSON
object with ``vocab_size``, ``ctx_dim`` and the three parameter arrays as
nested lists. Floats are written with ``repr`` so loading is exact.
"""

import json

import numpy as np

from .._io import atomic_write_text
from ..exceptions import InvalidInputError
from .policy import PARAM_NAMES, ToyPolicy

MAGIC = "chainrank-toypolicy"
FORMAT_VERSION = 1


def save_policy(path, policy, extra=None):
    body = {
        "vocab_size": policy.vocab_size,
        "ctx_dim": policy.ctx_dim,
        **{name: getattr(policy, name).tolist() for name in PARAM_NAMES},
    }
    if extra:
        body["meta"] = extra
    atomic_write_text(path, f"{MAGIC} {FORMAT_VERSION}\n{json.dumps(body, sort_keys=True)}\n")


def load_policy(path):
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2 or header[0] != MAGIC:
            raise InvalidInputError(f"{path}: not a toy policy checkpoint")
        if int(header[1]) != FORMAT_VERSION:
            raise InvalidInputError(f"{path}: unsupported checkpoint version {header[1]}")
        body = json.loads(fh.read())
    return ToyPolicy(
        body["vocab_size"],
        body["ctx_dim"],
        *(np.asarray(body[name], dtype=np.float64) for name in PARAM_NAMES),
    )
