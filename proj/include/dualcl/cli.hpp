/*
 * Copyright (c) 2026 The DualCL Authors
 *
 * Licensed under the Apache License, Version 2.0;
 * You may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an 'AS IS' BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "dualcl/trainer.hpp"

namespace dualcl {

// Invalid invocation: unknown command or flag, unparsable value, missing
// required flag, bad config-file key. run_cli maps this to exit code 2.
struct UsageError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Thrown by parse_config when the arguments ask for --help; carries the text
// to print. run_cli prints it to stdout and exits 0.
struct HelpRequested {
  std::string text;
};

// Fully resolved invocation: one command plus every setting it may consult.
// Precedence: command-line flags beat config-file entries beat defaults,
// except that the profile ("desk" or "paper") is resolved first and installs
// its learning-rate schedule and batch size before the other overrides apply.
struct RunConfig {
  std::string command;

  std::string config_path;      // --config; empty when none was given
  std::string out_dir;          // --out; empty means "derive from time + seed"
  std::string train_path;       // --train
  std::string test_path;        // --test
  std::string checkpoint_path;  // --checkpoint

  // --labels, comma-separated; empty means "infer class0..classK-1 from the
  // training file".
  std::vector<std::string> label_names;

  // Config-file-only sweep settings (the flag surface stays fixed):
  //   sweep-counts = 5,10,20   per-class training-set sizes
  //   sweep-seeds  = 5         seeds per cell, starting at the base seed
  std::vector<int> sweep_counts{5, 10, 20};
  int sweep_seeds = 5;

  TrainConfig train;  // mode, lambda, tau, epochs, batch size, seed, profile
};

// Pure function of the argument vector and the bytes of the --config file:
// no clocks, no environment. Throws UsageError on any invalid invocation and
// HelpRequested when help is asked for.
RunConfig parse_config(const std::vector<std::string>& args);

// Full command dispatch. Writes result files under the output directory and
// lists every written path on `out`, one per line; errors go to `err`.
// Returns the process exit code: 0 success, 1 runtime failure, 2 usage error.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dualcl
