#include "scenecap/train.hpp"

#include <cmath>

#include "scenecap/decode.hpp"
#include "scenecap/metrics.hpp"

namespace scenecap {

using ad::Tape;
using ad::Tensor;
using ad::Var;

AdamState AdamState::init(const ModelParams& params) {
  AdamState state;
  for (const auto& e : params.entries()) {
    state.m.push_back(Tensor::zeros(e.tensor->rows(), e.tensor->cols()));
    state.v.push_back(Tensor::zeros(e.tensor->rows(), e.tensor->cols()));
  }
  return state;
}

void adam_step(ModelParams& params, const std::vector<Tensor>& grads, AdamState& state,
               double lr) {
  auto entries = params.entries();
  if (grads.size() != entries.size() || state.m.size() != entries.size())
    throw Error("adam_step: gradient/state count mismatch");
  state.step += 1;
  double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (size_t i = 0; i < entries.size(); ++i) {
    Tensor& p = *entries[i].tensor;
    const Tensor& g = grads[i];
    if (!p.same_shape(g))
      throw Error("adam_step: gradient shape mismatch for " + entries[i].name);
    Tensor& m = state.m[i];
    Tensor& v = state.v[i];
    for (size_t j = 0; j < p.size(); ++j) {
      m.data[j] = state.beta1 * m.data[j] + (1.0 - state.beta1) * g.data[j];
      v.data[j] = state.beta2 * v.data[j] + (1.0 - state.beta2) * g.data[j] * g.data[j];
      double m_hat = m.data[j] / bc1;
      double v_hat = v.data[j] / bc2;
      p.data[j] -= lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
  }
}

double clip_global_norm(std::vector<Tensor>& grads, double max_norm) {
  double sq = 0.0;
  for (const Tensor& g : grads)
    for (double x : g.data) sq += x * x;
  double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    double s = max_norm / norm;
    for (Tensor& g : grads)
      for (double& x : g.data) x *= s;
  }
  return norm;
}

std::vector<PreparedImage> prepare_images(const Dataset& data, const Vocabulary& vocab,
                                          const GraphConfig& gcfg, const ModelConfig& mcfg) {
  std::vector<PreparedImage> images;
  for (const DatasetEntry& entry : data.entries) {
    SceneGraph sem = build_semantic_graph(entry.detections, gcfg);
    SceneGraph geo = build_geometry_graph(entry.detections, gcfg);
    for (const SceneGraph* g : {&sem, &geo}) {
      ValidationReport report = validate_graph(*g);
      if (!report.ok())
        throw Error("prepare_images: image " + std::to_string(entry.detections.image_id) +
                    ": " + report.violations.front().message);
    }
    PreparedImage img;
    img.inputs = make_scene_inputs(sem, geo, mcfg);
    for (const auto& tokens : entry.captions) {
      img.caption_ids.push_back(encode_caption(vocab, tokens));
      img.references.push_back(tokens);
    }
    images.push_back(std::move(img));
  }
  return images;
}

double dataset_loss(const ModelParams& params, const ModelConfig& cfg,
                    const std::vector<PreparedImage>& images) {
  double nll = 0.0;
  int64_t tokens = 0;
  for (const PreparedImage& img : images) {
    Tape tape;
    ParamVars pv = wrap_params(tape, params, false);
    ForwardCtx ctx{tape, cfg, false, nullptr};
    for (const auto& ids : img.caption_ids) {
      CaptionScore score = caption_logprob(ctx, pv, img.inputs, ids);
      nll -= tape.scalar_value(score.total);
      tokens += static_cast<int64_t>(score.per_token.size());
    }
  }
  return tokens == 0 ? 0.0 : nll / static_cast<double>(tokens);
}

double dataset_cider(const ModelParams& params, const ModelConfig& cfg, const Vocabulary& vocab,
                     const std::vector<PreparedImage>& images, int max_len) {
  std::vector<EvalPair> pairs;
  for (const PreparedImage& img : images) {
    Hypothesis hyp = greedy_decode(params, cfg, img.inputs, max_len);
    EvalPair pair;
    pair.candidate = decode_caption(vocab, hyp.tokens);
    pair.references = img.references;
    pairs.push_back(std::move(pair));
  }
  return cider_d(pairs);
}

TrainResult train(ModelParams& params, const ModelConfig& mcfg,
                  const std::vector<PreparedImage>& train_set,
                  const std::vector<PreparedImage>& val_set, const Vocabulary& vocab,
                  const TrainConfig& cfg, const std::function<void(const EpochLog&)>& on_epoch) {
  if (cfg.batch_size < 1) throw Error("train: batch_size must be >= 1");
  if (cfg.lr0 <= 0.0) throw Error("train: lr0 must be positive");
  if (cfg.decay <= 0.0 || cfg.decay > 1.0) throw Error("train: decay must be in (0, 1]");

  struct Sample {
    int image;
    int caption;
  };
  std::vector<Sample> samples;
  for (size_t i = 0; i < train_set.size(); ++i)
    for (size_t c = 0; c < train_set[i].caption_ids.size(); ++c)
      samples.push_back({static_cast<int>(i), static_cast<int>(c)});

  TrainResult result;
  Rng rng(cfg.seed);
  AdamState adam = AdamState::init(params);
  double lr = cfg.lr0;
  int64_t global_step = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    // lr = lr0 * decay^floor(epoch / decay_every), via exact chained decay.
    if (epoch > 0 && cfg.decay_every > 0 && epoch % cfg.decay_every == 0) lr *= cfg.decay;
    rng.shuffle(samples);

    double epoch_nll = 0.0;
    int64_t epoch_tokens = 0;
    for (size_t begin = 0; begin < samples.size(); begin += static_cast<size_t>(cfg.batch_size)) {
      size_t end = std::min(samples.size(), begin + static_cast<size_t>(cfg.batch_size));
      Tape tape;
      ParamVars pv = wrap_params(tape, params, true);
      ForwardCtx ctx{tape, mcfg, true, &rng};

      std::vector<Var> totals;
      int64_t batch_tokens = 0;
      for (size_t s = begin; s < end; ++s) {
        const PreparedImage& img = train_set[static_cast<size_t>(samples[s].image)];
        CaptionScore score =
            caption_logprob(ctx, pv, img.inputs,
                            img.caption_ids[static_cast<size_t>(samples[s].caption)]);
        totals.push_back(score.total);
        batch_tokens += static_cast<int64_t>(score.per_token.size());
      }
      Var loss = ad::scale(ad::sum_all(ad::concat(totals)),
                           -1.0 / static_cast<double>(batch_tokens));
      double loss_value = tape.scalar_value(loss);
      if (!std::isfinite(loss_value))
        throw Error("train: non-finite loss at epoch " + std::to_string(epoch) + " step " +
                    std::to_string(global_step) + " (batch starting at sample " +
                    std::to_string(begin) + ")");
      epoch_nll += loss_value * static_cast<double>(batch_tokens);
      epoch_tokens += batch_tokens;

      tape.backward(loss);
      std::vector<Tensor> grads;
      grads.reserve(pv.all.size());
      for (Var v : pv.all) grads.push_back(tape.grad(v));
      clip_global_norm(grads, cfg.grad_clip);
      adam_step(params, grads, adam, lr);
      global_step += 1;
    }

    EpochLog log;
    log.epoch = epoch;
    log.step = global_step;
    log.lr = lr;
    log.train_loss = epoch_tokens == 0 ? 0.0 : epoch_nll / static_cast<double>(epoch_tokens);
    log.train_loss_sum = epoch_nll;
    bool run_val = cfg.val_every > 0 && !val_set.empty() && (epoch % cfg.val_every == 0);
    if (run_val) {
      log.val_loss = dataset_loss(params, mcfg, val_set);
      log.val_cider = dataset_cider(params, mcfg, vocab, val_set, vocab.max_len);
      if (result.best_epoch < 0 || *log.val_cider > result.best_val_cider) {
        result.best_epoch = epoch;
        result.best_val_cider = *log.val_cider;
        result.best_params = params;
      }
    }
    result.log.push_back(log);
    if (on_epoch) on_epoch(log);
  }

  if (result.best_epoch < 0) {
    result.best_epoch = cfg.epochs - 1;
    result.best_params = params;
  }
  return result;
}

}  // namespace scenecap
