#!/usr/bin/env python3
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
"""Converts a Common/Combined Log Format access log to `timestamp,ip` CSV.

    tools/clf_to_csv.py access.log > log.csv
    throttlekit ingest --log log.csv --size 800 --out real800.csv

Lines that do not parse are counted and reported on stderr.
"""

import argparse
import csv
import datetime
import re
import sys

_LINE = re.compile(r'^(?P<ip>\S+) \S+ \S+ \[(?P<ts>[^\]]+)\]')


def convert(lines, out):
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["timestamp", "ip"])
    bad = 0
    for line in lines:
        m = _LINE.match(line)
        if not m:
            bad += line.strip() != ""
            continue
        try:
            ts = datetime.datetime.strptime(m["ts"], "%d/%b/%Y:%H:%M:%S %z")
        except ValueError:
            bad += 1
            continue
        writer.writerow([ts.isoformat(), m["ip"]])
    return bad


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("log", nargs="?", type=argparse.FileType("r"),
                        default=sys.stdin)
    args = parser.parse_args()
    bad = convert(args.log, sys.stdout)
    if bad:
        print(f"skipped {bad} unparseable lines", file=sys.stderr)


if __name__ == "__main__":
    main()
