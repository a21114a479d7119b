// Copyright 2026 the zsr authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <map>
#include <string>

#include "zsr/sim.hpp"
#include "zsr/train.hpp"

namespace zsr::config {

// Flat key=value configuration. Precedence: defaults < preset < file < flag
// overrides. The echo is what a run writes into its run directory and into
// checkpoints; re-running from the echo reproduces results.
class RunConfig {
 public:
  RunConfig();  // defaults (desk preset)

  void apply_preset(const std::string& name);  // "desk" or "paper"
  void load_file(const std::string& path);
  void set(const std::string& key, const std::string& value);
  void apply_overrides(const std::map<std::string, std::string>& kv);

  std::string str(const std::string& key) const;
  double num(const std::string& key) const;
  int integer(const std::string& key) const;
  uint64_t seed(const std::string& key) const;
  bool has(const std::string& key) const;

  std::string echo() const;
  static RunConfig from_echo(const std::string& text);

  train::SystemConfig system_config() const;
  train::TrainConfig train_config() const;
  sim::DatasetSpec dataset_spec() const;

 private:
  std::map<std::string, std::string> kv_;
};

}  // namespace zsr::config
