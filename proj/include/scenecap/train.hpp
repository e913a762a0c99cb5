#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "scenecap/corpus.hpp"
#include "scenecap/model.hpp"

namespace scenecap {

struct TrainConfig {
  double lr0 = 5e-4;
  double decay = 0.8;
  int decay_every = 5;  // 0 disables decay
  int batch_size = 16;
  int epochs = 30;
  double grad_clip = 5.0;  // 0 disables clipping
  uint64_t seed = 0;
  int val_every = 1;  // epochs between validation passes; 0 disables
};

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int64_t step = 0;
  std::vector<ad::Tensor> m;
  std::vector<ad::Tensor> v;

  static AdamState init(const ModelParams& params);
};

/// Bias-corrected Adam update; grads align with params.entries().
void adam_step(ModelParams& params, const std::vector<ad::Tensor>& grads, AdamState& state,
               double lr);

/// Global-norm gradient clipping; returns the pre-clip norm.
double clip_global_norm(std::vector<ad::Tensor>& grads, double max_norm);

/// One training sample source: the scene inputs plus its encoded captions.
struct PreparedImage {
  SceneInputs inputs;
  std::vector<std::vector<int>> caption_ids;
  std::vector<std::vector<std::string>> references;  // tokenized, for CIDEr-D
};

/// Builds both graphs per image and extracts model inputs.
std::vector<PreparedImage> prepare_images(const Dataset& data, const Vocabulary& vocab,
                                          const GraphConfig& gcfg, const ModelConfig& mcfg);

struct EpochLog {
  int epoch = 0;
  int64_t step = 0;  // cumulative optimizer steps
  double lr = 0.0;
  double train_loss = 0.0;      // per-token mean NLL over the epoch
  double train_loss_sum = 0.0;  // summed NLL
  std::optional<double> val_loss;
  std::optional<double> val_cider;
};

struct TrainResult {
  std::vector<EpochLog> log;
  int best_epoch = -1;
  double best_val_cider = 0.0;
  ModelParams best_params;  // best-validation-CIDEr snapshot (final when no validation)
};

/// Per-token mean NLL of a prepared set (dropout off).
double dataset_loss(const ModelParams& params, const ModelConfig& cfg,
                    const std::vector<PreparedImage>& images);

/// Greedy-decoding CIDEr-D of a prepared set against its references.
double dataset_cider(const ModelParams& params, const ModelConfig& cfg, const Vocabulary& vocab,
                     const std::vector<PreparedImage>& images, int max_len = 16);

/// Teacher-forced cross-entropy training with seeded shuffling, global-norm
/// clipping, and the stepped learning-rate schedule
/// lr = lr0 * decay^floor(epoch / decay_every). Deterministic given the seed.
TrainResult train(ModelParams& params, const ModelConfig& mcfg,
                  const std::vector<PreparedImage>& train_set,
                  const std::vector<PreparedImage>& val_set, const Vocabulary& vocab,
                  const TrainConfig& cfg,
                  const std::function<void(const EpochLog&)>& on_epoch = {});

}  // namespace scenecap
