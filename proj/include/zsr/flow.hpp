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

#include <memory>
#include <optional>
#include <stdexcept>
#include <string>

#include "zsr/image.hpp"
#include "zsr/sim.hpp"

namespace zsr::flow {

// Estimates a displacement field F on the target grid such that
// backward_warp(source, F) approximately reproduces target. Returns nullopt
// when estimation does not converge.
class FlowProvider {
 public:
  virtual ~FlowProvider() = default;
  virtual std::optional<FlowField> estimate(const ImagePlane& target,
                                            const ImagePlane& source) = 0;
};

// Serves the simulator truth for one training pair: the LR-grid field when
// queried at LR dims and the GT-grid field at GT dims.
class OracleFlowProvider : public FlowProvider {
 public:
  explicit OracleFlowProvider(const sim::PairTruth& truth) : truth_(truth) {}
  std::optional<FlowField> estimate(const ImagePlane& target,
                                    const ImagePlane& source) override;

 private:
  sim::PairTruth truth_;
};

// Coarse-to-fine block matching: 3 pyramid levels, 5x5 blocks, +-4 px search
// per level, parabolic sub-pixel refinement, 3x3 mean smoothing.
class BlockMatchFlowProvider : public FlowProvider {
 public:
  explicit BlockMatchFlowProvider(double fail_threshold = 0.05)
      : fail_threshold_(fail_threshold) {}
  std::optional<FlowField> estimate(const ImagePlane& target,
                                    const ImagePlane& source) override;

 private:
  double fail_threshold_;
};

// Serves a precomputed field from disk regardless of the inputs.
class ExternalFlowProvider : public FlowProvider {
 public:
  explicit ExternalFlowProvider(const std::string& path)
      : field_(read_flow(path)) {}
  explicit ExternalFlowProvider(FlowField field) : field_(std::move(field)) {}
  std::optional<FlowField> estimate(const ImagePlane& target,
                                    const ImagePlane&) override {
    if (field_.height != target.height || field_.width != target.width)
      return std::nullopt;
    return field_;
  }

 private:
  FlowField field_;
};

// Test stub proving a code path never consults its provider.
class PoisonedFlowProvider : public FlowProvider {
 public:
  std::optional<FlowField> estimate(const ImagePlane&,
                                    const ImagePlane&) override {
    throw std::logic_error("poisoned flow provider was called");
  }
};

}  // namespace zsr::flow
