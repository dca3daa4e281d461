// Copyright 2026 The ThrottleKit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// `throttlekit` command line: serve-gateway, serve-telemetry, gen, ingest,
// run, oracle and report.

#ifndef THROTTLEKIT_CLI_H_
#define THROTTLEKIT_CLI_H_

#include <ostream>
#include <string>
#include <vector>

namespace throttlekit {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

/// Parses and executes one command line (args excludes the program name).
/// Machine-readable output goes to `out`, diagnostics to `err`.
int Dispatch(const std::vector<std::string>& args, std::ostream& out,
             std::ostream& err);

}  // namespace throttlekit

#endif  // THROTTLEKIT_CLI_H_
