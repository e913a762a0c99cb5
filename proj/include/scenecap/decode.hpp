#pragma once

#include <array>
#include <vector>

#include "scenecap/model.hpp"

namespace scenecap {

/// Per-emitted-word diagnostics: category gates and attention weights.
struct StepDiagnostics {
  std::vector<double> gates;  // one per active category, fixed order
  std::array<std::vector<double>, kNumUnitCategories> weights;
};

struct Hypothesis {
  std::vector<int> tokens;  // starts with BOS; ends with EOS when terminated early
  double log_prob = 0.0;
  bool finished = false;
  std::vector<StepDiagnostics> steps;  // one per emitted token

  /// Emitted word count (excludes BOS/EOS).
  int word_count() const;
};

struct DecodeOptions {
  int beam = 3;
  int max_len = 16;
  bool length_normalize = false;  // rank by log_prob / words instead of raw sum
};

/// Argmax decoding (ties resolved to the lowest token id); dropout off.
Hypothesis greedy_decode(const ModelParams& params, const ModelConfig& cfg,
                         const SceneInputs& scene, int max_len = 16);

/// Standard beam search over summed token log-probabilities. Finished
/// hypotheses retire into a completed pool and are not expanded; the result
/// is the pool sorted by non-increasing score with deterministic
/// tie-breaking (token id, then hypothesis order).
std::vector<Hypothesis> beam_search(const ModelParams& params, const ModelConfig& cfg,
                                    const SceneInputs& scene, const DecodeOptions& opts);

}  // namespace scenecap
