#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "scenecap/autodiff.hpp"
#include "scenecap/scene_graph.hpp"

namespace scenecap {

/// Unit categories in fixed order. Context vectors and gates always follow
/// this order over the active categories.
enum class UnitCategory {
  object = 0,
  attribute = 1,
  semantic_relation = 2,
  geometry_relation = 3,
};
constexpr int kNumUnitCategories = 4;
extern const std::array<const char*, kNumUnitCategories> kUnitCategoryNames;

struct UnitSet {
  std::array<bool, kNumUnitCategories> active{true, true, true, true};

  bool has(UnitCategory c) const { return active[static_cast<size_t>(c)]; }
  int count() const;
  /// Parses "O,A,RS,RG"-style lists (any subset, any order).
  static UnitSet parse(const std::string& text);
  std::string to_string() const;
};

struct ModelConfig {
  int appearance_dim = 2048;  // region feature width
  int unit_dim = 1000;        // projection / GCN / unit embedding width
  int attention_dim = 512;
  int lstm_dim = 1000;
  int word_dim = 1000;
  int label_dim = 128;
  int n_attrs = 3;
  double dropout = 0.5;
  bool use_gate = true;
  /// Baseline features: object units are the projected appearance vectors
  /// only (no label/geometry fusion, no GCN).
  bool appearance_only_objects = false;
  UnitSet units;
  int vocab_size = 0;
  int n_object_labels = 0;
  int n_attribute_labels = 0;
  int n_relation_labels = 0;

  void validate() const;  // throws Error on inconsistent settings
  /// Width of the decoder context vector: unit_dim per active category.
  int context_dim() const { return unit_dim * units.count(); }
};

struct DenseLayer {
  ad::Tensor w;  // in x out
  ad::Tensor b;  // 1 x out
};

struct AttentionParams {
  ad::Tensor w_in;     // (unit_dim + lstm_dim) x attention_dim
  ad::Tensor w_score;  // attention_dim x 1
};

struct LstmParams {
  ad::Tensor w_x;  // input_dim x 4*lstm_dim
  ad::Tensor w_h;  // lstm_dim x 4*lstm_dim
  ad::Tensor b;    // 1 x 4*lstm_dim, forget block initialized to 1
};

/// All learnable state. Which members are allocated is a pure function of
/// the config; entries() lists the allocated tensors in declared order
/// (the checkpoint and optimizer order).
struct ModelParams {
  ad::Tensor object_label_emb;     // |V_o| x label_dim
  ad::Tensor attribute_label_emb;  // |V_a| x label_dim
  ad::Tensor relation_label_emb;   // |V_r| x label_dim
  DenseLayer object_proj;          // (appearance+label+5) -> unit_dim
  DenseLayer attribute_proj;       // n_attrs*label_dim -> unit_dim
  DenseLayer sem_relation_proj;    // label_dim -> unit_dim
  DenseLayer geo_relation_proj;    // 8 -> unit_dim
  ad::Tensor appearance_residual;  // appearance_dim x unit_dim
  DenseLayer object_gcn;           // unit_dim -> unit_dim
  DenseLayer attribute_gcn;        // 2*unit_dim -> unit_dim
  DenseLayer sem_relation_gcn;     // 3*unit_dim -> unit_dim
  DenseLayer geo_relation_gcn;     // 3*unit_dim -> unit_dim
  std::array<AttentionParams, kNumUnitCategories> attention;
  ad::Tensor gate_w;  // (lstm_dim + context_dim) x n_active
  ad::Tensor word_emb;  // vocab x word_dim
  LstmParams attn_lstm;  // input: lstm_dim + appearance_dim + word_dim
  LstmParams lang_lstm;  // input: lstm_dim + context_dim
  ad::Tensor out_w;  // lstm_dim x vocab
  ad::Tensor out_b;  // 1 x vocab

  struct Entry {
    std::string name;
    ad::Tensor* tensor;
  };
  struct ConstEntry {
    std::string name;
    const ad::Tensor* tensor;
  };
  std::vector<Entry> entries();
  std::vector<ConstEntry> entries() const;
  size_t parameter_count() const;

  /// Allocates every tensor required by cfg, zero-filled.
  static ModelParams zeros(const ModelConfig& cfg);
  /// Seeded initialization: uniform +/- sqrt(6/(fan_in+fan_out)) for
  /// matrices, normal(0, 0.1) for embedding tables, zero biases with the
  /// LSTM forget block at 1.
  static ModelParams init(const ModelConfig& cfg, uint64_t seed);
};

/// Parameter handles on a tape, mirroring ModelParams. `all` parallels
/// ModelParams::entries() for gradient collection.
struct ParamVars {
  ad::Var object_label_emb, attribute_label_emb, relation_label_emb;
  struct DenseVars {
    ad::Var w, b;
  };
  DenseVars object_proj, attribute_proj, sem_relation_proj, geo_relation_proj;
  ad::Var appearance_residual;
  DenseVars object_gcn, attribute_gcn, sem_relation_gcn, geo_relation_gcn;
  struct AttVars {
    ad::Var w_in, w_score;
  };
  std::array<AttVars, kNumUnitCategories> attention;
  ad::Var gate_w;
  ad::Var word_emb;
  struct LstmVars {
    ad::Var w_x, w_h, b;
  };
  LstmVars attn_lstm, lang_lstm;
  ad::Var out_w, out_b;
  std::vector<ad::Var> all;
};

ParamVars wrap_params(ad::Tape& tape, const ModelParams& params, bool requires_grad);

/// Binds already-created leaves (ordered like params.entries()) to the named
/// handles; the inverse of wrap_params for callers that manage leaves
/// themselves (e.g. gradient checkers).
ParamVars bind_param_vars(const ModelParams& params, const std::vector<ad::Var>& vars);

/// Per-image constants extracted from the two graphs: everything the
/// forward pass consumes.
struct SceneInputs {
  int image_id = 0;
  int n_objects = 0;
  ad::Tensor appearance;  // N x appearance_dim
  std::vector<int> object_labels;
  ad::Tensor object_geometry;       // N x 5
  std::vector<int> attribute_labels;  // N * n_attrs, row-major
  std::vector<RelationUnit> sem_relations;
  std::vector<RelationUnit> geo_relations;
  ad::Tensor geo_cues;  // |geo_relations| x 8
};

SceneInputs make_scene_inputs(const SceneGraph& semantic, const SceneGraph& geometry,
                              const ModelConfig& cfg);

/// Shared state for one forward pass: the tape, the mode, and the dropout
/// stream (required in train mode).
struct ForwardCtx {
  ad::Tape& tape;
  const ModelConfig& cfg;
  bool train = false;
  Rng* rng = nullptr;
};

// --- Node features -----------------------------------------------------

/// Object features: FC-ReLU-Dropout over [appearance; label emb; geometry].
/// Rows align with objects.
ad::Var fuse_object_features(ForwardCtx& ctx, const ParamVars& pv, ad::Var appearance,
                             const std::vector<int>& labels, ad::Var geometry);

/// Attribute-unit features from n_attrs label embeddings per unit.
ad::Var fuse_attribute_features(ForwardCtx& ctx, const ParamVars& pv,
                                const std::vector<int>& attribute_labels, int n_units);

/// Relation features: label-embedding path for semantic graphs, geometry-cue
/// path for geometry graphs (independent projections).
ad::Var fuse_semantic_relation_features(ForwardCtx& ctx, const ParamVars& pv,
                                        const std::vector<int>& predicate_ids);
ad::Var fuse_geometry_relation_features(ForwardCtx& ctx, const ParamVars& pv, ad::Var cues);

// --- Unit embeddings ----------------------------------------------------

struct UnitEmbeddings {
  ad::Var objects;                          // N x unit_dim
  std::optional<ad::Var> attributes;        // N x unit_dim
  std::optional<ad::Var> sem_relations;     // R_s x unit_dim (absent when empty)
  std::optional<ad::Var> geo_relations;     // R_g x unit_dim
  ad::Var appearance_rows;                  // N x appearance_dim leaf
  int n_objects = 0;
  int n_sem = 0;
  int n_geo = 0;
};

/// GCN embeddings with residual connections:
///   u_o = gcn_o(f_o) + appearance * W_res
///   u_a = gcn_a([u_o; f_a]) + f_a
///   u_r = gcn_r([u_subj; f_r; u_obj]) + f_r   (per graph kind)
UnitEmbeddings embed_units(ForwardCtx& ctx, const ParamVars& pv, const SceneInputs& scene);

// --- Attention and decoding ---------------------------------------------

struct AttentionResult {
  ad::Var context;  // 1 x unit_dim
  ad::Var weights;  // 1 x K, nonnegative, sums to 1
};

/// Additive soft attention: softmax over w_score . tanh(W_in [u_k; query]).
/// Throws Error when K = 0.
AttentionResult soft_attention(ForwardCtx& ctx, const ParamVars::AttVars& att, ad::Var query,
                               ad::Var units);

struct GatedAttentionResult {
  ad::Var context;  // 1 x context_dim, active categories in fixed order
  ad::Var gates;    // 1 x n_active; all-ones constant when the gate is off
  std::array<std::optional<ad::Var>, kNumUnitCategories> weights;
};

/// Per-category soft attention followed by sigmoid gating. Empty categories
/// contribute a zero context and still receive a gate component.
GatedAttentionResult gated_attention(ForwardCtx& ctx, const ParamVars& pv, ad::Var query,
                                     const UnitEmbeddings& units);

struct DecoderState {
  ad::Var h1, c1, h2, c2;
};

DecoderState initial_decoder_state(ForwardCtx& ctx);

struct DecoderStepResult {
  DecoderState state;
  ad::Var logits;  // 1 x vocab
  GatedAttentionResult attention;
};

/// One decoding step: attention LSTM over [h2_prev; mean appearance; word
/// embedding], gated attention queried by h1, language LSTM over [h1; c_t],
/// then the output head.
DecoderStepResult decoder_step(ForwardCtx& ctx, const ParamVars& pv, const DecoderState& state,
                               int word_id, ad::Var mean_appearance,
                               const UnitEmbeddings& units);

/// Mean-pooled appearance row (1 x appearance_dim) on the tape.
ad::Var mean_appearance(ForwardCtx& ctx, ad::Var appearance);

struct CaptionScore {
  ad::Var total;                  // 1x1 sum of per-position log-probabilities
  std::vector<double> per_token;  // forward values, one per predicted token
};

/// Teacher-forced log-probability of an encoded caption ([BOS ... EOS]).
CaptionScore caption_logprob(ForwardCtx& ctx, const ParamVars& pv, const SceneInputs& scene,
                             const std::vector<int>& token_ids);

}  // namespace scenecap
