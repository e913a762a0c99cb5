#include "scenecap/model.hpp"

#include <cmath>
#include <sstream>
#include <unordered_map>

namespace scenecap {

using ad::Tape;
using ad::Tensor;
using ad::Var;

const std::array<const char*, kNumUnitCategories> kUnitCategoryNames = {
    "object", "attribute", "semantic_relation", "geometry_relation"};

int UnitSet::count() const {
  int n = 0;
  for (bool b : active) n += b ? 1 : 0;
  return n;
}

UnitSet UnitSet::parse(const std::string& text) {
  UnitSet set;
  set.active = {false, false, false, false};
  std::string token;
  std::istringstream in(text);
  while (std::getline(in, token, ',')) {
    // Trim whitespace.
    size_t b = token.find_first_not_of(" \t");
    size_t e = token.find_last_not_of(" \t");
    if (b == std::string::npos) continue;
    std::string t = token.substr(b, e - b + 1);
    if (t == "O" || t == "o")
      set.active[0] = true;
    else if (t == "A" || t == "a")
      set.active[1] = true;
    else if (t == "RS" || t == "rs" || t == "Rs")
      set.active[2] = true;
    else if (t == "RG" || t == "rg" || t == "Rg")
      set.active[3] = true;
    else
      throw Error("unit set: unknown category '" + t + "' (use O, A, RS, RG)");
  }
  if (set.count() == 0) throw Error("unit set: at least one category required");
  return set;
}

std::string UnitSet::to_string() const {
  static const char* names[] = {"O", "A", "RS", "RG"};
  std::string out;
  for (int i = 0; i < kNumUnitCategories; ++i) {
    if (!active[static_cast<size_t>(i)]) continue;
    if (!out.empty()) out += ",";
    out += names[i];
  }
  return out;
}

void ModelConfig::validate() const {
  auto positive = [](int v, const char* name) {
    if (v < 1) throw Error(std::string("model config: ") + name + " must be >= 1");
  };
  positive(appearance_dim, "appearance_dim");
  positive(unit_dim, "unit_dim");
  positive(attention_dim, "attention_dim");
  positive(lstm_dim, "lstm_dim");
  positive(word_dim, "word_dim");
  positive(label_dim, "label_dim");
  positive(n_attrs, "n_attrs");
  if (dropout < 0.0 || dropout >= 1.0) throw Error("model config: dropout must be in [0, 1)");
  if (units.count() == 0) throw Error("model config: unit set must be non-empty");
  if (vocab_size < 5) throw Error("model config: vocab_size must cover reserved ids plus words");
  if (!appearance_only_objects && n_object_labels < 1)
    throw Error("model config: n_object_labels must be >= 1");
  if (units.has(UnitCategory::attribute) && n_attribute_labels < 1)
    throw Error("model config: n_attribute_labels must be >= 1");
  if (units.has(UnitCategory::semantic_relation) && n_relation_labels < 1)
    throw Error("model config: n_relation_labels must be >= 1");
}

namespace {

template <typename Params, typename E>
std::vector<E> collect_entries(Params& p) {
  std::vector<E> out;
  auto push = [&out](const char* name, auto* tensor) {
    if (tensor->size() > 0) out.push_back({name, tensor});
  };
  push("object_label_emb", &p.object_label_emb);
  push("attribute_label_emb", &p.attribute_label_emb);
  push("relation_label_emb", &p.relation_label_emb);
  push("object_proj_w", &p.object_proj.w);
  push("object_proj_b", &p.object_proj.b);
  push("attribute_proj_w", &p.attribute_proj.w);
  push("attribute_proj_b", &p.attribute_proj.b);
  push("sem_relation_proj_w", &p.sem_relation_proj.w);
  push("sem_relation_proj_b", &p.sem_relation_proj.b);
  push("geo_relation_proj_w", &p.geo_relation_proj.w);
  push("geo_relation_proj_b", &p.geo_relation_proj.b);
  push("appearance_residual", &p.appearance_residual);
  push("object_gcn_w", &p.object_gcn.w);
  push("object_gcn_b", &p.object_gcn.b);
  push("attribute_gcn_w", &p.attribute_gcn.w);
  push("attribute_gcn_b", &p.attribute_gcn.b);
  push("sem_relation_gcn_w", &p.sem_relation_gcn.w);
  push("sem_relation_gcn_b", &p.sem_relation_gcn.b);
  push("geo_relation_gcn_w", &p.geo_relation_gcn.w);
  push("geo_relation_gcn_b", &p.geo_relation_gcn.b);
  for (int c = 0; c < kNumUnitCategories; ++c) {
    std::string base = std::string("attention_") + kUnitCategoryNames[static_cast<size_t>(c)];
    auto& att = p.attention[static_cast<size_t>(c)];
    if (att.w_in.size() > 0) {
      out.push_back({base + "_w_in", &att.w_in});
      out.push_back({base + "_w_score", &att.w_score});
    }
  }
  push("gate_w", &p.gate_w);
  push("word_emb", &p.word_emb);
  push("attn_lstm_w_x", &p.attn_lstm.w_x);
  push("attn_lstm_w_h", &p.attn_lstm.w_h);
  push("attn_lstm_b", &p.attn_lstm.b);
  push("lang_lstm_w_x", &p.lang_lstm.w_x);
  push("lang_lstm_w_h", &p.lang_lstm.w_h);
  push("lang_lstm_b", &p.lang_lstm.b);
  push("out_w", &p.out_w);
  push("out_b", &p.out_b);
  return out;
}

}  // namespace

std::vector<ModelParams::Entry> ModelParams::entries() {
  return collect_entries<ModelParams, Entry>(*this);
}

std::vector<ModelParams::ConstEntry> ModelParams::entries() const {
  return collect_entries<const ModelParams, ConstEntry>(*this);
}

size_t ModelParams::parameter_count() const {
  size_t n = 0;
  for (const auto& e : entries()) n += e.tensor->size();
  return n;
}

ModelParams ModelParams::zeros(const ModelConfig& cfg) {
  cfg.validate();
  ModelParams p;
  bool fused_objects = !cfg.appearance_only_objects;
  bool want_attr = cfg.units.has(UnitCategory::attribute);
  bool want_sem = cfg.units.has(UnitCategory::semantic_relation);
  bool want_geo = cfg.units.has(UnitCategory::geometry_relation);

  if (fused_objects) {
    p.object_label_emb = Tensor::zeros(cfg.n_object_labels, cfg.label_dim);
    p.object_proj.w = Tensor::zeros(cfg.appearance_dim + cfg.label_dim + 5, cfg.unit_dim);
    p.object_proj.b = Tensor::zeros(1, cfg.unit_dim);
    p.object_gcn.w = Tensor::zeros(cfg.unit_dim, cfg.unit_dim);
    p.object_gcn.b = Tensor::zeros(1, cfg.unit_dim);
  }
  if (want_attr) {
    p.attribute_label_emb = Tensor::zeros(cfg.n_attribute_labels, cfg.label_dim);
    p.attribute_proj.w = Tensor::zeros(cfg.n_attrs * cfg.label_dim, cfg.unit_dim);
    p.attribute_proj.b = Tensor::zeros(1, cfg.unit_dim);
    p.attribute_gcn.w = Tensor::zeros(2 * cfg.unit_dim, cfg.unit_dim);
    p.attribute_gcn.b = Tensor::zeros(1, cfg.unit_dim);
  }
  if (want_sem) {
    p.relation_label_emb = Tensor::zeros(cfg.n_relation_labels, cfg.label_dim);
    p.sem_relation_proj.w = Tensor::zeros(cfg.label_dim, cfg.unit_dim);
    p.sem_relation_proj.b = Tensor::zeros(1, cfg.unit_dim);
    p.sem_relation_gcn.w = Tensor::zeros(3 * cfg.unit_dim, cfg.unit_dim);
    p.sem_relation_gcn.b = Tensor::zeros(1, cfg.unit_dim);
  }
  if (want_geo) {
    p.geo_relation_proj.w = Tensor::zeros(8, cfg.unit_dim);
    p.geo_relation_proj.b = Tensor::zeros(1, cfg.unit_dim);
    p.geo_relation_gcn.w = Tensor::zeros(3 * cfg.unit_dim, cfg.unit_dim);
    p.geo_relation_gcn.b = Tensor::zeros(1, cfg.unit_dim);
  }
  p.appearance_residual = Tensor::zeros(cfg.appearance_dim, cfg.unit_dim);
  for (int c = 0; c < kNumUnitCategories; ++c) {
    if (!cfg.units.active[static_cast<size_t>(c)]) continue;
    p.attention[static_cast<size_t>(c)].w_in =
        Tensor::zeros(cfg.unit_dim + cfg.lstm_dim, cfg.attention_dim);
    p.attention[static_cast<size_t>(c)].w_score = Tensor::zeros(cfg.attention_dim, 1);
  }
  if (cfg.use_gate)
    p.gate_w = Tensor::zeros(cfg.lstm_dim + cfg.context_dim(), cfg.units.count());
  p.word_emb = Tensor::zeros(cfg.vocab_size, cfg.word_dim);
  p.attn_lstm.w_x =
      Tensor::zeros(cfg.lstm_dim + cfg.appearance_dim + cfg.word_dim, 4 * cfg.lstm_dim);
  p.attn_lstm.w_h = Tensor::zeros(cfg.lstm_dim, 4 * cfg.lstm_dim);
  p.attn_lstm.b = Tensor::zeros(1, 4 * cfg.lstm_dim);
  p.lang_lstm.w_x = Tensor::zeros(cfg.lstm_dim + cfg.context_dim(), 4 * cfg.lstm_dim);
  p.lang_lstm.w_h = Tensor::zeros(cfg.lstm_dim, 4 * cfg.lstm_dim);
  p.lang_lstm.b = Tensor::zeros(1, 4 * cfg.lstm_dim);
  p.out_w = Tensor::zeros(cfg.lstm_dim, cfg.vocab_size);
  p.out_b = Tensor::zeros(1, cfg.vocab_size);
  return p;
}

ModelParams ModelParams::init(const ModelConfig& cfg, uint64_t seed) {
  ModelParams p = zeros(cfg);
  Rng rng(seed);
  auto xavier = [&rng](Tensor& t) {
    double a = std::sqrt(6.0 / (t.rows() + t.cols()));
    for (double& x : t.data) x = rng.uniform(-a, a);
  };
  auto table = [&rng](Tensor& t) {
    for (double& x : t.data) x = rng.normal(0.0, 0.1);
  };
  // Draw in declared entry order so results depend only on the seed.
  for (auto& e : p.entries()) {
    if (e.name.ends_with("_emb")) {
      table(*e.tensor);
    } else if (e.name.ends_with("_b")) {
      // biases stay zero; LSTM forget blocks are set below
    } else {
      xavier(*e.tensor);
    }
  }
  // Forget-gate bias 1 (gate layout [input, forget, candidate, output]).
  for (Tensor* b : {&p.attn_lstm.b, &p.lang_lstm.b}) {
    int h = b->cols() / 4;
    for (int j = h; j < 2 * h; ++j) b->at(0, j) = 1.0;
  }
  return p;
}

ParamVars bind_param_vars(const ModelParams& params, const std::vector<Var>& vars) {
  auto entries = params.entries();
  if (vars.size() != entries.size())
    throw Error("bind_param_vars: " + std::to_string(vars.size()) + " leaves for " +
                std::to_string(entries.size()) + " parameters");
  ParamVars v;
  v.all = vars;
  std::unordered_map<const Tensor*, Var> lookup;
  for (size_t i = 0; i < entries.size(); ++i) lookup[entries[i].tensor] = vars[i];
  auto get = [&lookup](const Tensor& t) {
    auto it = lookup.find(&t);
    return it == lookup.end() ? Var{} : it->second;
  };
  v.object_label_emb = get(params.object_label_emb);
  v.attribute_label_emb = get(params.attribute_label_emb);
  v.relation_label_emb = get(params.relation_label_emb);
  v.object_proj = {get(params.object_proj.w), get(params.object_proj.b)};
  v.attribute_proj = {get(params.attribute_proj.w), get(params.attribute_proj.b)};
  v.sem_relation_proj = {get(params.sem_relation_proj.w), get(params.sem_relation_proj.b)};
  v.geo_relation_proj = {get(params.geo_relation_proj.w), get(params.geo_relation_proj.b)};
  v.appearance_residual = get(params.appearance_residual);
  v.object_gcn = {get(params.object_gcn.w), get(params.object_gcn.b)};
  v.attribute_gcn = {get(params.attribute_gcn.w), get(params.attribute_gcn.b)};
  v.sem_relation_gcn = {get(params.sem_relation_gcn.w), get(params.sem_relation_gcn.b)};
  v.geo_relation_gcn = {get(params.geo_relation_gcn.w), get(params.geo_relation_gcn.b)};
  for (int c = 0; c < kNumUnitCategories; ++c) {
    v.attention[static_cast<size_t>(c)] = {get(params.attention[static_cast<size_t>(c)].w_in),
                                           get(params.attention[static_cast<size_t>(c)].w_score)};
  }
  v.gate_w = get(params.gate_w);
  v.word_emb = get(params.word_emb);
  v.attn_lstm = {get(params.attn_lstm.w_x), get(params.attn_lstm.w_h), get(params.attn_lstm.b)};
  v.lang_lstm = {get(params.lang_lstm.w_x), get(params.lang_lstm.w_h), get(params.lang_lstm.b)};
  v.out_w = get(params.out_w);
  v.out_b = get(params.out_b);
  return v;
}

ParamVars wrap_params(Tape& tape, const ModelParams& params, bool requires_grad) {
  std::vector<Var> vars;
  for (const auto& e : params.entries()) vars.push_back(tape.leaf(*e.tensor, requires_grad));
  return bind_param_vars(params, vars);
}

SceneInputs make_scene_inputs(const SceneGraph& semantic, const SceneGraph& geometry,
                              const ModelConfig& cfg) {
  if (semantic.kind != GraphKind::semantic || geometry.kind != GraphKind::geometry)
    throw Error("make_scene_inputs: graph kinds are swapped");
  if (semantic.object_units.size() != geometry.object_units.size())
    throw Error("make_scene_inputs: graphs disagree on object count");
  int n = static_cast<int>(semantic.object_units.size());
  if (n == 0) throw Error("make_scene_inputs: image " + std::to_string(semantic.image_id) +
                          " has no objects");

  SceneInputs scene;
  scene.image_id = semantic.image_id;
  scene.n_objects = n;
  scene.appearance = Tensor::zeros(n, cfg.appearance_dim);
  scene.object_geometry = Tensor::zeros(n, 5);
  for (int i = 0; i < n; ++i) {
    const DetectedObject& obj = semantic.object_units[static_cast<size_t>(i)];
    if (static_cast<int>(obj.appearance.size()) != cfg.appearance_dim)
      throw Error("image " + std::to_string(semantic.image_id) + " object " +
                  std::to_string(obj.id) + ": appearance length " +
                  std::to_string(obj.appearance.size()) + ", expected " +
                  std::to_string(cfg.appearance_dim));
    for (int j = 0; j < cfg.appearance_dim; ++j)
      scene.appearance.at(i, j) = obj.appearance[static_cast<size_t>(j)];
    if (obj.label_id < 0 || obj.label_id >= std::max(cfg.n_object_labels, 1))
      throw Error("image " + std::to_string(semantic.image_id) + ": object label id " +
                  std::to_string(obj.label_id) + " out of range");
    scene.object_labels.push_back(obj.label_id);
    ObjGeomCue cue = object_geometry_cue(obj.box, semantic.image);
    for (int j = 0; j < 5; ++j) scene.object_geometry.at(i, j) = cue.v[static_cast<size_t>(j)];
  }
  for (const AttributeUnit& au : semantic.attribute_units) {
    if (static_cast<int>(au.labels.size()) != cfg.n_attrs)
      throw Error("image " + std::to_string(semantic.image_id) +
                  ": attribute unit has " + std::to_string(au.labels.size()) +
                  " labels, expected " + std::to_string(cfg.n_attrs));
    for (int id : au.labels) scene.attribute_labels.push_back(id);
  }
  scene.sem_relations = semantic.relation_units;
  scene.geo_relations = geometry.relation_units;
  scene.geo_cues = Tensor::zeros(static_cast<int>(scene.geo_relations.size()), 8);
  for (size_t r = 0; r < scene.geo_relations.size(); ++r)
    for (int j = 0; j < 8; ++j)
      scene.geo_cues.at(static_cast<int>(r), j) =
          scene.geo_relations[r].cue.v[static_cast<size_t>(j)];
  return scene;
}

namespace {

/// FC-ReLU-Dropout block shared by all projection and GCN layers.
Var dense_block(ForwardCtx& ctx, const ParamVars::DenseVars& layer, Var x) {
  if (!layer.w.valid()) throw Error("model: layer parameters missing for this config");
  int n = ctx.tape.value(x).rows();
  Var y = ad::relu(ad::matmul(x, layer.w) + ad::broadcast_rows(layer.b, n));
  if (ctx.train && ctx.cfg.dropout > 0.0) {
    if (ctx.rng == nullptr) throw Error("model: train mode requires a dropout rng");
    y = ad::dropout(y, ctx.cfg.dropout, true, *ctx.rng);
  }
  return y;
}

std::pair<Var, Var> lstm_step(ForwardCtx& ctx, const ParamVars::LstmVars& cell, Var x, Var h,
                              Var c) {
  Var lin = ad::matmul(x, cell.w_x) + ad::matmul(h, cell.w_h) + cell.b;
  int hdim = ctx.tape.value(lin).cols() / 4;
  Var i = ad::sigmoid(ad::slice_cols(lin, 0, hdim));
  Var f = ad::sigmoid(ad::slice_cols(lin, hdim, hdim));
  Var g = ad::tanh(ad::slice_cols(lin, 2 * hdim, hdim));
  Var o = ad::sigmoid(ad::slice_cols(lin, 3 * hdim, hdim));
  Var c_next = ad::mul(f, c) + ad::mul(i, g);
  Var h_next = ad::mul(o, ad::tanh(c_next));
  return {h_next, c_next};
}

}  // namespace

Var fuse_object_features(ForwardCtx& ctx, const ParamVars& pv, Var appearance,
                         const std::vector<int>& labels, Var geometry) {
  int n = ctx.tape.value(appearance).rows();
  if (static_cast<int>(labels.size()) != n)
    throw Error("fuse_object_features: " + std::to_string(labels.size()) + " labels for " +
                std::to_string(n) + " objects");
  if (ctx.tape.value(appearance).cols() != ctx.cfg.appearance_dim)
    throw Error("fuse_object_features: appearance width " +
                std::to_string(ctx.tape.value(appearance).cols()) + ", expected " +
                std::to_string(ctx.cfg.appearance_dim));
  Var label_emb = ad::lookup_rows(pv.object_label_emb, labels);
  Var x = ad::concat({appearance, label_emb, geometry});
  return dense_block(ctx, pv.object_proj, x);
}

Var fuse_attribute_features(ForwardCtx& ctx, const ParamVars& pv,
                            const std::vector<int>& attribute_labels, int n_units) {
  if (static_cast<int>(attribute_labels.size()) != n_units * ctx.cfg.n_attrs)
    throw Error("fuse_attribute_features: expected " +
                std::to_string(n_units * ctx.cfg.n_attrs) + " label ids, got " +
                std::to_string(attribute_labels.size()));
  Var emb = ad::lookup_rows(pv.attribute_label_emb, attribute_labels);
  Var grouped = ad::reshape(emb, n_units, ctx.cfg.n_attrs * ctx.cfg.label_dim);
  return dense_block(ctx, pv.attribute_proj, grouped);
}

Var fuse_semantic_relation_features(ForwardCtx& ctx, const ParamVars& pv,
                                    const std::vector<int>& predicate_ids) {
  Var emb = ad::lookup_rows(pv.relation_label_emb, predicate_ids);
  return dense_block(ctx, pv.sem_relation_proj, emb);
}

Var fuse_geometry_relation_features(ForwardCtx& ctx, const ParamVars& pv, Var cues) {
  if (ctx.tape.value(cues).cols() != 8)
    throw Error("fuse_geometry_relation_features: cue width " +
                std::to_string(ctx.tape.value(cues).cols()) + ", expected 8");
  return dense_block(ctx, pv.geo_relation_proj, cues);
}

namespace {

/// Relation embedding u_r = gcn([u_subj; f_r; u_obj]) + f_r.
Var embed_relations(ForwardCtx& ctx, const ParamVars::DenseVars& gcn, Var object_embeddings,
                    Var relation_features, const std::vector<RelationUnit>& relations) {
  std::vector<int> subj, obj;
  for (const RelationUnit& r : relations) {
    subj.push_back(r.subject);
    obj.push_back(r.object);
  }
  Var u_subj = ad::lookup_rows(object_embeddings, subj);
  Var u_obj = ad::lookup_rows(object_embeddings, obj);
  Var x = ad::concat({u_subj, relation_features, u_obj});
  return dense_block(ctx, gcn, x) + relation_features;
}

}  // namespace

UnitEmbeddings embed_units(ForwardCtx& ctx, const ParamVars& pv, const SceneInputs& scene) {
  UnitEmbeddings units;
  units.n_objects = scene.n_objects;
  Var appearance = ctx.tape.leaf(scene.appearance);
  units.appearance_rows = appearance;

  Var residual = ad::matmul(appearance, pv.appearance_residual);
  if (ctx.cfg.appearance_only_objects) {
    units.objects = residual;
  } else {
    Var geometry = ctx.tape.leaf(scene.object_geometry);
    Var fused = fuse_object_features(ctx, pv, appearance, scene.object_labels, geometry);
    units.objects = dense_block(ctx, pv.object_gcn, fused) + residual;
  }

  if (ctx.cfg.units.has(UnitCategory::attribute)) {
    Var f_a = fuse_attribute_features(ctx, pv, scene.attribute_labels, scene.n_objects);
    units.attributes =
        dense_block(ctx, pv.attribute_gcn, ad::concat({units.objects, f_a})) + f_a;
  }

  if (ctx.cfg.units.has(UnitCategory::semantic_relation) && !scene.sem_relations.empty()) {
    std::vector<int> predicates;
    for (const RelationUnit& r : scene.sem_relations) {
      if (r.predicate_id < 0 || r.predicate_id >= ctx.cfg.n_relation_labels)
        throw Error("embed_units: predicate id " + std::to_string(r.predicate_id) +
                    " out of range");
      predicates.push_back(r.predicate_id);
    }
    Var f_r = fuse_semantic_relation_features(ctx, pv, predicates);
    units.sem_relations =
        embed_relations(ctx, pv.sem_relation_gcn, units.objects, f_r, scene.sem_relations);
    units.n_sem = static_cast<int>(scene.sem_relations.size());
  }

  if (ctx.cfg.units.has(UnitCategory::geometry_relation) && !scene.geo_relations.empty()) {
    Var cues = ctx.tape.leaf(scene.geo_cues);
    Var f_r = fuse_geometry_relation_features(ctx, pv, cues);
    units.geo_relations =
        embed_relations(ctx, pv.geo_relation_gcn, units.objects, f_r, scene.geo_relations);
    units.n_geo = static_cast<int>(scene.geo_relations.size());
  }
  return units;
}

AttentionResult soft_attention(ForwardCtx& ctx, const ParamVars::AttVars& att, Var query,
                               Var units) {
  int k = ctx.tape.value(units).rows();
  if (k == 0) throw Error("soft_attention: empty unit set");
  Var x = ad::concat({units, ad::broadcast_rows(query, k)});
  Var hidden = ad::tanh(ad::matmul(x, att.w_in));
  Var scores = ad::matmul(hidden, att.w_score);           // K x 1
  Var weights = ad::softmax_rows(ad::transpose(scores));  // 1 x K
  Var context = ad::matmul(weights, units);               // 1 x unit_dim
  return {context, weights};
}

GatedAttentionResult gated_attention(ForwardCtx& ctx, const ParamVars& pv, Var query,
                                     const UnitEmbeddings& units) {
  GatedAttentionResult result;
  std::vector<Var> contexts;
  for (int c = 0; c < kNumUnitCategories; ++c) {
    if (!ctx.cfg.units.active[static_cast<size_t>(c)]) continue;
    std::optional<Var> category_units;
    switch (static_cast<UnitCategory>(c)) {
      case UnitCategory::object:
        category_units = units.objects;
        break;
      case UnitCategory::attribute:
        category_units = units.attributes;
        break;
      case UnitCategory::semantic_relation:
        category_units = units.sem_relations;
        break;
      case UnitCategory::geometry_relation:
        category_units = units.geo_relations;
        break;
    }
    if (category_units.has_value() && ctx.tape.value(*category_units).rows() > 0) {
      AttentionResult att =
          soft_attention(ctx, pv.attention[static_cast<size_t>(c)], query, *category_units);
      contexts.push_back(att.context);
      result.weights[static_cast<size_t>(c)] = att.weights;
    } else {
      // Empty category: zero context, gate still computed.
      contexts.push_back(ctx.tape.leaf(Tensor::zeros(1, ctx.cfg.unit_dim)));
    }
  }
  if (contexts.empty()) throw Error("gated_attention: no active unit categories");

  int n_active = static_cast<int>(contexts.size());
  if (ctx.cfg.use_gate) {
    std::vector<Var> gate_in = {query};
    gate_in.insert(gate_in.end(), contexts.begin(), contexts.end());
    result.gates = ad::sigmoid(ad::matmul(ad::concat(gate_in), pv.gate_w));
    std::vector<Var> gated;
    for (int i = 0; i < n_active; ++i)
      gated.push_back(ad::scale_by(contexts[static_cast<size_t>(i)],
                                   ad::slice_cols(result.gates, i, 1)));
    result.context = ad::concat(gated);
  } else {
    result.gates = ctx.tape.leaf(Tensor::full(1, n_active, 1.0));
    result.context = ad::concat(contexts);
  }
  return result;
}

DecoderState initial_decoder_state(ForwardCtx& ctx) {
  Var h = ctx.tape.leaf(Tensor::zeros(1, ctx.cfg.lstm_dim));
  Var c = ctx.tape.leaf(Tensor::zeros(1, ctx.cfg.lstm_dim));
  Var h2 = ctx.tape.leaf(Tensor::zeros(1, ctx.cfg.lstm_dim));
  Var c2 = ctx.tape.leaf(Tensor::zeros(1, ctx.cfg.lstm_dim));
  return {h, c, h2, c2};
}

Var mean_appearance(ForwardCtx& ctx, Var appearance) {
  (void)ctx;
  return ad::mean_axis(appearance, 0);
}

DecoderStepResult decoder_step(ForwardCtx& ctx, const ParamVars& pv, const DecoderState& state,
                               int word_id, Var mean_app, const UnitEmbeddings& units) {
  if (word_id < 0 || word_id >= ctx.cfg.vocab_size)
    throw Error("decoder_step: word id " + std::to_string(word_id) + " out of range [0, " +
                std::to_string(ctx.cfg.vocab_size) + ")");
  Var w = ad::lookup_rows(pv.word_emb, {word_id});
  Var x1 = ad::concat({state.h2, mean_app, w});
  auto [h1, c1] = lstm_step(ctx, pv.attn_lstm, x1, state.h1, state.c1);
  GatedAttentionResult att = gated_attention(ctx, pv, h1, units);
  Var x2 = ad::concat({h1, att.context});
  auto [h2, c2] = lstm_step(ctx, pv.lang_lstm, x2, state.h2, state.c2);
  Var logits = ad::matmul(h2, pv.out_w) + pv.out_b;
  return {{h1, c1, h2, c2}, logits, std::move(att)};
}

CaptionScore caption_logprob(ForwardCtx& ctx, const ParamVars& pv, const SceneInputs& scene,
                             const std::vector<int>& token_ids) {
  if (token_ids.size() < 2)
    throw Error("caption_logprob: caption must contain at least BOS and EOS");
  for (int id : token_ids)
    if (id < 0 || id >= ctx.cfg.vocab_size)
      throw Error("caption_logprob: token id " + std::to_string(id) + " out of range [0, " +
                  std::to_string(ctx.cfg.vocab_size) + ")");

  UnitEmbeddings units = embed_units(ctx, pv, scene);
  Var mean_app = mean_appearance(ctx, units.appearance_rows);
  DecoderState state = initial_decoder_state(ctx);

  CaptionScore score;
  std::vector<Var> step_logprobs;
  for (size_t t = 0; t + 1 < token_ids.size(); ++t) {
    DecoderStepResult step = decoder_step(ctx, pv, state, token_ids[t], mean_app, units);
    state = step.state;
    Var logprobs = ad::log_softmax_rows(step.logits);
    Var target = ad::pick(logprobs, {token_ids[t + 1]});
    step_logprobs.push_back(target);
    score.per_token.push_back(ctx.tape.scalar_value(target));
  }
  score.total = ad::sum_all(ad::concat(step_logprobs));
  return score;
}

}  // namespace scenecap
