#pragma once

// Shared test helpers: straight-line reference implementations (independent
// of the tape machinery) and toy-instance builders. Oracles here compute
// with plain loops over raw buffers so they can catch bugs in the recorded
// forward/backward paths.

#include <algorithm>
#include <cmath>
#include <vector>

#include "scenecap/corpus.hpp"
#include "scenecap/model.hpp"
#include "scenecap/util.hpp"

namespace testsup {

using Vec = std::vector<double>;
using scenecap::ModelConfig;
using scenecap::ModelParams;
using scenecap::Rng;
using scenecap::SceneDetections;
using scenecap::SceneInputs;
using scenecap::UnitCategory;
using scenecap::ad::Tensor;

// --- plain vector math ----------------------------------------------------

inline Vec orc_concat(const std::vector<Vec>& parts) {
  Vec out;
  for (const Vec& p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

inline Vec orc_matvec(const Vec& x, const Tensor& w) {
  Vec y(static_cast<size_t>(w.cols()), 0.0);
  for (int i = 0; i < w.rows(); ++i)
    for (int j = 0; j < w.cols(); ++j) y[static_cast<size_t>(j)] += x[static_cast<size_t>(i)] * w.at(i, j);
  return y;
}

inline Vec orc_affine(const Vec& x, const Tensor& w, const Tensor& b) {
  Vec y = orc_matvec(x, w);
  for (int j = 0; j < b.cols(); ++j) y[static_cast<size_t>(j)] += b.at(0, j);
  return y;
}

inline Vec orc_relu(Vec v) {
  for (double& x : v) x = x > 0.0 ? x : 0.0;
  return v;
}

inline Vec orc_tanh(Vec v) {
  for (double& x : v) x = std::tanh(x);
  return v;
}

inline Vec orc_sigmoid(Vec v) {
  for (double& x : v) x = 1.0 / (1.0 + std::exp(-x));
  return v;
}

inline Vec orc_softmax(Vec v) {
  double mx = v[0];
  for (double x : v) mx = std::max(mx, x);
  double sum = 0.0;
  for (double& x : v) {
    x = std::exp(x - mx);
    sum += x;
  }
  for (double& x : v) x /= sum;
  return v;
}

inline double orc_dot(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline Vec orc_add(Vec a, const Vec& b) {
  for (size_t i = 0; i < a.size(); ++i) a[i] += b[i];
  return a;
}

inline Vec tensor_row(const Tensor& t, int r) {
  Vec v(static_cast<size_t>(t.cols()));
  for (int j = 0; j < t.cols(); ++j) v[static_cast<size_t>(j)] = t.at(r, j);
  return v;
}

struct OrcLstmState {
  Vec h, c;
};

inline OrcLstmState orc_lstm_step(const Vec& x, const OrcLstmState& prev, const Tensor& wx,
                                  const Tensor& wh, const Tensor& b) {
  Vec lin = orc_affine(x, wx, b);
  Vec hlin = orc_matvec(prev.h, wh);
  for (size_t i = 0; i < lin.size(); ++i) lin[i] += hlin[i];
  int hdim = static_cast<int>(prev.h.size());
  auto slice = [&](int begin) {
    return Vec(lin.begin() + begin, lin.begin() + begin + hdim);
  };
  Vec i_gate = orc_sigmoid(slice(0));
  Vec f_gate = orc_sigmoid(slice(hdim));
  Vec g_cand = orc_tanh(slice(2 * hdim));
  Vec o_gate = orc_sigmoid(slice(3 * hdim));
  OrcLstmState next;
  next.c.resize(static_cast<size_t>(hdim));
  next.h.resize(static_cast<size_t>(hdim));
  for (int j = 0; j < hdim; ++j) {
    next.c[static_cast<size_t>(j)] = f_gate[static_cast<size_t>(j)] * prev.c[static_cast<size_t>(j)] +
                                     i_gate[static_cast<size_t>(j)] * g_cand[static_cast<size_t>(j)];
    next.h[static_cast<size_t>(j)] =
        o_gate[static_cast<size_t>(j)] * std::tanh(next.c[static_cast<size_t>(j)]);
  }
  return next;
}

// --- straight-line re-implementation of the full forward (eval mode) ------

struct OrcUnits {
  std::vector<Vec> objects;
  std::vector<Vec> attributes;
  std::vector<Vec> sem_relations;
  std::vector<Vec> geo_relations;
};

inline OrcUnits orc_unit_embeddings(const ModelParams& p, const ModelConfig& cfg,
                                    const SceneInputs& scene) {
  OrcUnits u;
  int n = scene.n_objects;
  for (int i = 0; i < n; ++i) {
    Vec app = tensor_row(scene.appearance, i);
    Vec residual = orc_matvec(app, p.appearance_residual);
    if (cfg.appearance_only_objects) {
      u.objects.push_back(residual);
      continue;
    }
    Vec x = orc_concat({app,
                        tensor_row(p.object_label_emb, scene.object_labels[static_cast<size_t>(i)]),
                        tensor_row(scene.object_geometry, i)});
    Vec fused = orc_relu(orc_affine(x, p.object_proj.w, p.object_proj.b));
    Vec gcn = orc_relu(orc_affine(fused, p.object_gcn.w, p.object_gcn.b));
    u.objects.push_back(orc_add(gcn, residual));
  }
  if (cfg.units.has(UnitCategory::attribute)) {
    for (int i = 0; i < n; ++i) {
      std::vector<Vec> embs;
      for (int k = 0; k < cfg.n_attrs; ++k)
        embs.push_back(tensor_row(
            p.attribute_label_emb,
            scene.attribute_labels[static_cast<size_t>(i * cfg.n_attrs + k)]));
      Vec f_a = orc_relu(orc_affine(orc_concat(embs), p.attribute_proj.w, p.attribute_proj.b));
      Vec gcn = orc_relu(orc_affine(orc_concat({u.objects[static_cast<size_t>(i)], f_a}),
                                    p.attribute_gcn.w, p.attribute_gcn.b));
      u.attributes.push_back(orc_add(gcn, f_a));
    }
  }
  if (cfg.units.has(UnitCategory::semantic_relation)) {
    for (const auto& rel : scene.sem_relations) {
      Vec f_r = orc_relu(orc_affine(tensor_row(p.relation_label_emb, rel.predicate_id),
                                    p.sem_relation_proj.w, p.sem_relation_proj.b));
      Vec x = orc_concat({u.objects[static_cast<size_t>(rel.subject)], f_r,
                          u.objects[static_cast<size_t>(rel.object)]});
      Vec gcn = orc_relu(orc_affine(x, p.sem_relation_gcn.w, p.sem_relation_gcn.b));
      u.sem_relations.push_back(orc_add(gcn, f_r));
    }
  }
  if (cfg.units.has(UnitCategory::geometry_relation)) {
    for (size_t r = 0; r < scene.geo_relations.size(); ++r) {
      Vec cue = tensor_row(scene.geo_cues, static_cast<int>(r));
      Vec f_r = orc_relu(orc_affine(cue, p.geo_relation_proj.w, p.geo_relation_proj.b));
      const auto& rel = scene.geo_relations[r];
      Vec x = orc_concat({u.objects[static_cast<size_t>(rel.subject)], f_r,
                          u.objects[static_cast<size_t>(rel.object)]});
      Vec gcn = orc_relu(orc_affine(x, p.geo_relation_gcn.w, p.geo_relation_gcn.b));
      u.geo_relations.push_back(orc_add(gcn, f_r));
    }
  }
  return u;
}

struct OrcAttention {
  Vec context;
  Vec weights;
};

inline OrcAttention orc_soft_attention(const Vec& query, const std::vector<Vec>& units,
                                       const Tensor& w_in, const Tensor& w_score) {
  Vec scores;
  for (const Vec& unit : units) {
    Vec hidden = orc_tanh(orc_matvec(orc_concat({unit, query}), w_in));
    Vec s = orc_matvec(hidden, w_score);
    scores.push_back(s[0]);
  }
  OrcAttention out;
  out.weights = orc_softmax(scores);
  out.context.assign(units[0].size(), 0.0);
  for (size_t k = 0; k < units.size(); ++k)
    for (size_t j = 0; j < units[k].size(); ++j)
      out.context[j] += out.weights[k] * units[k][j];
  return out;
}

struct OrcStep {
  OrcLstmState s1, s2;
  Vec logits;
  Vec gates;
};

/// Full decoder step (eval mode), mirrored with independent code.
inline OrcStep orc_decoder_step(const ModelParams& p, const ModelConfig& cfg,
                                const SceneInputs& scene, const OrcUnits& units,
                                const OrcLstmState& s1, const OrcLstmState& s2, int word_id) {
  int n = scene.n_objects;
  Vec mean_app(static_cast<size_t>(cfg.appearance_dim), 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < cfg.appearance_dim; ++j)
      mean_app[static_cast<size_t>(j)] += scene.appearance.at(i, j) / n;

  OrcStep step;
  Vec x1 = orc_concat({s2.h, mean_app, tensor_row(p.word_emb, word_id)});
  step.s1 = orc_lstm_step(x1, s1, p.attn_lstm.w_x, p.attn_lstm.w_h, p.attn_lstm.b);

  std::vector<Vec> contexts;
  for (int c = 0; c < scenecap::kNumUnitCategories; ++c) {
    if (!cfg.units.active[static_cast<size_t>(c)]) continue;
    const std::vector<Vec>* cat_units = nullptr;
    switch (static_cast<UnitCategory>(c)) {
      case UnitCategory::object: cat_units = &units.objects; break;
      case UnitCategory::attribute: cat_units = &units.attributes; break;
      case UnitCategory::semantic_relation: cat_units = &units.sem_relations; break;
      case UnitCategory::geometry_relation: cat_units = &units.geo_relations; break;
    }
    if (cat_units != nullptr && !cat_units->empty()) {
      const auto& att = p.attention[static_cast<size_t>(c)];
      contexts.push_back(orc_soft_attention(step.s1.h, *cat_units, att.w_in, att.w_score).context);
    } else {
      contexts.push_back(Vec(static_cast<size_t>(cfg.unit_dim), 0.0));
    }
  }

  Vec context;
  if (cfg.use_gate) {
    Vec gate_in = step.s1.h;
    for (const Vec& c : contexts) gate_in.insert(gate_in.end(), c.begin(), c.end());
    step.gates = orc_sigmoid(orc_matvec(gate_in, p.gate_w));
    for (size_t i = 0; i < contexts.size(); ++i)
      for (double v : contexts[i]) context.push_back(step.gates[i] * v);
  } else {
    step.gates.assign(contexts.size(), 1.0);
    context = orc_concat(contexts);
  }

  Vec x2 = orc_concat({step.s1.h, context});
  step.s2 = orc_lstm_step(x2, s2, p.lang_lstm.w_x, p.lang_lstm.w_h, p.lang_lstm.b);
  step.logits = orc_affine(step.s2.h, p.out_w, p.out_b);
  return step;
}

/// Independent two-layer attention decoder over projected appearance rows:
/// the no-graph reference the full model must reduce to.
inline Vec orc_baseline_logits(const ModelParams& p, const ModelConfig& cfg,
                               const SceneInputs& scene, OrcLstmState& s1, OrcLstmState& s2,
                               int word_id) {
  int n = scene.n_objects;
  std::vector<Vec> features;
  for (int i = 0; i < n; ++i)
    features.push_back(orc_matvec(tensor_row(scene.appearance, i), p.appearance_residual));
  Vec mean_app(static_cast<size_t>(cfg.appearance_dim), 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < cfg.appearance_dim; ++j)
      mean_app[static_cast<size_t>(j)] += scene.appearance.at(i, j) / n;

  Vec x1 = orc_concat({s2.h, mean_app, tensor_row(p.word_emb, word_id)});
  s1 = orc_lstm_step(x1, s1, p.attn_lstm.w_x, p.attn_lstm.w_h, p.attn_lstm.b);
  const auto& att = p.attention[0];
  Vec context = orc_soft_attention(s1.h, features, att.w_in, att.w_score).context;
  Vec x2 = orc_concat({s1.h, context});
  s2 = orc_lstm_step(x2, s2, p.lang_lstm.w_x, p.lang_lstm.w_h, p.lang_lstm.b);
  return orc_affine(s2.h, p.out_w, p.out_b);
}

// --- toy instances ----------------------------------------------------------

inline ModelConfig toy_config(int vocab_size = 11) {
  ModelConfig cfg;
  cfg.appearance_dim = 6;
  cfg.unit_dim = 8;
  cfg.attention_dim = 5;
  cfg.lstm_dim = 7;
  cfg.word_dim = 6;
  cfg.label_dim = 3;
  cfg.n_attrs = 2;
  cfg.dropout = 0.0;
  cfg.use_gate = true;
  cfg.vocab_size = vocab_size;
  cfg.n_object_labels = 4;
  cfg.n_attribute_labels = 5;
  cfg.n_relation_labels = 3;
  return cfg;
}

/// Random scene with boxes that tend to overlap, so geometry relations exist.
inline SceneDetections toy_scene(Rng& rng, const ModelConfig& cfg, int n_objects = 3) {
  SceneDetections dets;
  dets.image_id = 1;
  dets.image = {32.0, 32.0};
  for (int i = 0; i < n_objects; ++i) {
    scenecap::DetectedObject obj;
    obj.id = i;
    obj.box.w = rng.uniform(8.0, 20.0);
    obj.box.h = rng.uniform(8.0, 20.0);
    obj.box.cx = rng.uniform(obj.box.w / 2, 32.0 - obj.box.w / 2);
    obj.box.cy = rng.uniform(obj.box.h / 2, 32.0 - obj.box.h / 2);
    obj.label_id = static_cast<int>(rng.uniform_int(0, cfg.n_object_labels - 1));
    obj.score = rng.uniform(0.5, 1.0);
    obj.appearance.resize(static_cast<size_t>(cfg.appearance_dim));
    for (double& x : obj.appearance) x = rng.normal();
    int n_attr = static_cast<int>(rng.uniform_int(0, cfg.n_attrs));
    for (int a = 0; a < n_attr; ++a)
      obj.attributes.push_back(
          {static_cast<int>(rng.uniform_int(1, cfg.n_attribute_labels - 1)),
           rng.uniform(0.0, 1.0)});
    std::stable_sort(obj.attributes.begin(), obj.attributes.end(),
                     [](const auto& a, const auto& b) { return a.score > b.score; });
    dets.objects.push_back(std::move(obj));
  }
  for (int i = 0; i < n_objects; ++i)
    for (int j = 0; j < n_objects; ++j) {
      if (i == j) continue;
      if (rng.uniform() < 0.6)
        dets.relations.push_back(
            {i, j, static_cast<int>(rng.uniform_int(0, cfg.n_relation_labels - 1)),
             rng.uniform(0.0, 1.0)});
    }
  return dets;
}

inline SceneInputs toy_scene_inputs(Rng& rng, const ModelConfig& cfg, int n_objects = 3) {
  SceneDetections dets = toy_scene(rng, cfg, n_objects);
  scenecap::GraphConfig gcfg;
  gcfg.n_attrs = cfg.n_attrs;
  gcfg.iou_threshold = 0.05;
  gcfg.dist_threshold = 0.95;
  scenecap::SceneGraph sem = scenecap::build_semantic_graph(dets, gcfg);
  scenecap::SceneGraph geo = scenecap::build_geometry_graph(dets, gcfg);
  return scenecap::make_scene_inputs(sem, geo, cfg);
}

inline void randomize_params(ModelParams& params, Rng& rng, double scale = 0.4) {
  for (auto& e : params.entries())
    for (double& x : e.tensor->data) x = scale * rng.normal();
}

}  // namespace testsup
