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

import pathlib

import pytest

import throttlekit as tk

DATA = pathlib.Path(__file__).resolve().parent.parent / "data"


def test_bucket_consume_and_wait():
    s = tk.TokenBucketState(capacity=2, tokens=1, rate=0.5)
    s, ok = tk.try_consume(s, 0.0)
    assert ok and s.tokens == 0
    s2, ok = tk.try_consume(s, 1.0)
    assert not ok and s2.tokens == pytest.approx(0.5)
    assert tk.time_until_tokens(s, 0.0) == pytest.approx(2.0)
    with pytest.raises(tk.Error):
        tk.time_until_tokens(s, 0.0, 3)


def test_atb_rate_algebra():
    s = tk.AtbState(rate_per_min=10, congestion_per_min=30)
    assert tk.atb_increase_rate(s).rate_per_min == pytest.approx(12)
    down = tk.atb_decrease_rate(tk.AtbState(rate_per_min=20), 0.0)
    assert down.rate_per_min == pytest.approx(10)
    assert down.bucket.tokens == 0
    state, ready = tk.atb_acquire(tk.AtbState(tokens=0.0, rate_per_min=15), 0.0)
    assert ready == pytest.approx(4.0)


def test_wb_window():
    assert tk.wb_earliest_permit([0, 10, 20, 30], 4, 40) == 60
    assert tk.wb_earliest_permit([0, 10, 20], 4, 40) == 40


def test_oracle_on_fixture():
    text = (DATA / "tiny_instance.csv").read_text()
    greedy = tk.solve(text)
    exact = tk.solve(text, exact=True)
    assert greedy["feasible"] and exact["feasible"]
    assert greedy["objective"] == exact["objective"] == 1.0
    assert exact["check_feasible"]


def test_gen_synthetic_is_seeded():
    a = tk.gen_synthetic(5, 1, 200, seed=7, size=300, timestamps="absolute")
    assert a == tk.gen_synthetic(5, 1, 200, seed=7, size=300, timestamps="absolute")
    rows = [l for l in a.splitlines() if l and not l.startswith("#")]
    assert len(rows) == 301  # column header + 300 requests


def test_run_experiment_virtual():
    out = tk.run_experiment(profile="synth5", strategy="aatb", runs=3, size=400)
    assert len(out["runs"]) == 3
    for run in out["runs"]:
        assert run["total_429"] == run["gateway_rejected"]
        assert run["gateway_admitted"] == 400
    assert out["summary"]["strategy"] == "aatb"
    with pytest.raises(tk.Error):
        tk.run_experiment(runz=3)
