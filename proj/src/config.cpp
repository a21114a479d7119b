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

#include "zsr/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace zsr::config {

RunConfig::RunConfig() {
  // Global defaults; the desk preset refines the training scale.
  kv_["preset"] = "desk";
  kv_["seed"] = "7";
  kv_["mode"] = "dzsr";           // dzsr | tzsr | wide_only
  kv_["fusion"] = "w_then_t";     // w_then_t | t_then_w | concat
  kv_["fusion_split"] = "8";
  kv_["align"] = "two_stage";     // two_stage | flow_only | none
  kv_["anchor"] = "warped";       // warped | aux
  kv_["flow"] = "oracle";         // oracle | classical
  kv_["loss_arm"] = "l1_losw";    // l1 | l1_sw | l1_losw
  kv_["sw_weight"] = "0.08";
  kv_["sw_patch"] = "8";
  kv_["sw_stride"] = "4";
  kv_["sw_proj"] = "0";
  kv_["sw_stages"] = "0,1";
  kv_["zero_prob"] = "0.3";
  kv_["lambda_pos"] = "100";
  kv_["noise_mode"] = "both";     // none | gaussian | jpeg | both
  kv_["blocks"] = "16";
  kv_["encoder_width"] = "24";
  kv_["estimator_width"] = "16";
  kv_["match_channels"] = "16";
  kv_["aux_width"] = "16";
  kv_["frozen_seed"] = "77";
  kv_["r_w"] = "2";
  kv_["r_t"] = "4";
  kv_["threads"] = "2";
  kv_["holdout"] = "4";
  // Simulator defaults (criterion-scale synthetic set).
  kv_["scenes"] = "20";
  kv_["scene_size"] = "256";
  kv_["blur"] = "2.0";
  kv_["parallax"] = "3.0";
  kv_["noise"] = "0.0392156862745098";  // 10/255
  kv_["gain_jitter"] = "0.1";
  apply_preset("desk");
}

void RunConfig::apply_preset(const std::string& name) {
  if (name == "desk") {
    kv_["preset"] = "desk";
    kv_["batch"] = "8";
    kv_["lr_patch"] = "16";
    kv_["steps"] = "3000";
    kv_["width"] = "16";
    kv_["step_size"] = "1e-3";
    kv_["step_size_after"] = "5e-4";
    kv_["decay_at"] = "1500";
  } else if (name == "paper") {
    // Training configuration at publication scale: batch 16, 48x48 LR
    // patches, 400 epochs with the rate decayed at epoch 200.
    kv_["preset"] = "paper";
    kv_["batch"] = "16";
    kv_["lr_patch"] = "48";
    kv_["epochs"] = "400";
    kv_["decay_epoch"] = "200";
    kv_["steps"] = "0";  // derived from epochs x dataset size at run time
    kv_["width"] = "64";
    kv_["step_size"] = "1e-4";
    kv_["step_size_after"] = "5e-5";
    kv_["decay_at"] = "0";
  } else {
    throw std::invalid_argument("unknown preset: " + name);
  }
}

void RunConfig::load_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("config: cannot open " + path);
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty() || line[0] == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("config: bad line: " + line);
    set(line.substr(0, eq), line.substr(eq + 1));
  }
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (key == "preset") apply_preset(value);
  kv_[key] = value;
}

void RunConfig::apply_overrides(const std::map<std::string, std::string>& kv) {
  // Preset first so explicit keys win over its values.
  auto it = kv.find("preset");
  if (it != kv.end()) apply_preset(it->second);
  for (const auto& [k, v] : kv)
    if (k != "preset") kv_[k] = v;
}

std::string RunConfig::str(const std::string& key) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) throw std::invalid_argument("config: missing " + key);
  return it->second;
}

double RunConfig::num(const std::string& key) const {
  return std::stod(str(key));
}

int RunConfig::integer(const std::string& key) const {
  return std::stoi(str(key));
}

uint64_t RunConfig::seed(const std::string& key) const {
  return static_cast<uint64_t>(std::stoull(str(key)));
}

bool RunConfig::has(const std::string& key) const { return kv_.count(key) > 0; }

std::string RunConfig::echo() const {
  std::ostringstream os;
  for (const auto& [k, v] : kv_) os << k << "=" << v << "\n";
  return os.str();
}

RunConfig RunConfig::from_echo(const std::string& text) {
  RunConfig cfg;
  std::istringstream is(text);
  std::string line;
  // Apply the preset first, then everything else verbatim.
  std::map<std::string, std::string> kv;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  cfg.apply_overrides(kv);
  return cfg;
}

namespace {

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::istringstream is(s);
  std::string item;
  while (std::getline(is, item, ',')) out.push_back(std::stoi(item));
  return out;
}

}  // namespace

train::SystemConfig RunConfig::system_config() const {
  train::SystemConfig sc;
  sc.net.width = integer("width");
  sc.net.blocks = integer("blocks");
  sc.net.encoder_width = integer("encoder_width");
  sc.net.fusion_split = integer("fusion_split");
  sc.net.r_t = integer("r_t");

  std::string mode = str("mode");
  if (mode == "dzsr") sc.net.ref_mode = restore::RefMode::kTeleOnly;
  else if (mode == "tzsr") sc.net.ref_mode = restore::RefMode::kBoth;
  else if (mode == "wide_only") sc.net.ref_mode = restore::RefMode::kWideOnly;
  else throw std::invalid_argument("unknown mode: " + mode);

  std::string fusion = str("fusion");
  if (fusion == "w_then_t") sc.net.fusion = restore::Fusion::kWThenT;
  else if (fusion == "t_then_w") sc.net.fusion = restore::Fusion::kTThenW;
  else if (fusion == "concat") sc.net.fusion = restore::Fusion::kConcatAll;
  else throw std::invalid_argument("unknown fusion: " + fusion);

  sc.loss.arm = loss::loss_arm_from_string(str("loss_arm"));
  sc.loss.sw_weight = num("sw_weight");
  sc.loss.patch = integer("sw_patch");
  sc.loss.stride = integer("sw_stride");
  sc.loss.proj_dims = integer("sw_proj");
  sc.loss.stages = parse_int_list(str("sw_stages"));

  std::string noise = str("noise_mode");
  if (noise == "none") sc.noise.mode = align::NoiseMode::kNone;
  else if (noise == "gaussian") sc.noise.mode = align::NoiseMode::kGaussian;
  else if (noise == "jpeg") sc.noise.mode = align::NoiseMode::kJpeg;
  else if (noise == "both") sc.noise.mode = align::NoiseMode::kBoth;
  else throw std::invalid_argument("unknown noise mode: " + noise);

  std::string arm = str("align");
  if (arm == "two_stage") sc.align_arm = train::AlignArm::kTwoStage;
  else if (arm == "flow_only") sc.align_arm = train::AlignArm::kFlowOnly;
  else if (arm == "none") sc.align_arm = train::AlignArm::kNone;
  else throw std::invalid_argument("unknown align arm: " + arm);

  sc.anchor = str("anchor") == "aux" ? train::MatchAnchor::kAuxLr
                                     : train::MatchAnchor::kWarpedLr;
  sc.zero_prob = num("zero_prob");
  sc.lambda_pos = num("lambda_pos");
  sc.estimator_width = integer("estimator_width");
  sc.match_channels = integer("match_channels");
  sc.aux_width = integer("aux_width");
  sc.frozen_seed = seed("frozen_seed");
  sc.init_seed = seed("seed");
  sc.r_w = integer("r_w");
  sc.r_t = integer("r_t");
  return sc;
}

train::TrainConfig RunConfig::train_config() const {
  train::TrainConfig tc;
  tc.steps = integer("steps");
  tc.batch = integer("batch");
  tc.lr_patch = integer("lr_patch");
  tc.step_size = num("step_size");
  tc.step_size_after = num("step_size_after");
  tc.decay_at = integer("decay_at");
  tc.threads = integer("threads");
  tc.seed = seed("seed");
  return tc;
}

sim::DatasetSpec RunConfig::dataset_spec() const {
  sim::DatasetSpec spec;
  spec.scenes = integer("scenes");
  spec.scene_size = integer("scene_size");
  spec.base.blur_sigma = num("blur");
  spec.base.parallax_amplitude = num("parallax");
  spec.base.noise_sigma = num("noise");
  spec.base.r_w = integer("r_w");
  spec.base.r_t = integer("r_t");
  spec.gain_jitter = num("gain_jitter");
  return spec;
}

}  // namespace zsr::config
