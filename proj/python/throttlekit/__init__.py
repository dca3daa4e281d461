# Copyright 2026 The ThrottleKit Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#      http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""Token-bucket retry strategies, offline oracle and experiment emulator."""

import json as _json

from ._core import (
    AtbState,
    Error,
    TokenBucketState,
    atb_acquire,
    atb_decrease_rate,
    atb_increase_rate,
    gen_synthetic,
    refill,
    time_until_tokens,
    try_consume,
    wb_earliest_permit,
)
from . import _core

__all__ = [
    "AtbState",
    "Error",
    "TokenBucketState",
    "atb_acquire",
    "atb_decrease_rate",
    "atb_increase_rate",
    "gen_synthetic",
    "refill",
    "run_experiment",
    "solve",
    "time_until_tokens",
    "try_consume",
    "wb_earliest_permit",
]


def solve(instance_text, exact=False):
    """Solves an instance file's text; returns a dict like `throttlekit oracle`."""
    return _json.loads(_core._solve(instance_text, exact))


def run_experiment(config=None, **overrides):
    """Runs an experiment from a config dict (same keys as --config JSON).

    Returns {"summary": {...}, "runs": [...]}.
    """
    merged = dict(config or {})
    merged.update(overrides)
    return _json.loads(_core._run_experiment(_json.dumps(merged)))
