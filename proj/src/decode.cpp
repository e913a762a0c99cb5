#include "scenecap/decode.hpp"

#include <algorithm>

#include "scenecap/corpus.hpp"

namespace scenecap {

using ad::Tape;
using ad::Var;

namespace {

StepDiagnostics collect_diagnostics(Tape& tape, const ModelConfig& cfg,
                                    const GatedAttentionResult& att) {
  StepDiagnostics diag;
  diag.gates = tape.value(att.gates).data;
  for (int c = 0; c < kNumUnitCategories; ++c) {
    if (!cfg.units.active[static_cast<size_t>(c)]) continue;
    if (att.weights[static_cast<size_t>(c)].has_value())
      diag.weights[static_cast<size_t>(c)] =
          tape.value(*att.weights[static_cast<size_t>(c)]).data;
  }
  return diag;
}

int words_in(const std::vector<int>& tokens) {
  int n = 0;
  for (int t : tokens)
    if (t != Vocabulary::kBos && t != Vocabulary::kEos) ++n;
  return n;
}

double rank_score(const Hypothesis& h, bool length_normalize) {
  if (!length_normalize) return h.log_prob;
  int words = std::max(1, h.word_count());
  return h.log_prob / words;
}

}  // namespace

int Hypothesis::word_count() const { return words_in(tokens); }

Hypothesis greedy_decode(const ModelParams& params, const ModelConfig& cfg,
                         const SceneInputs& scene, int max_len) {
  Tape tape;
  ParamVars pv = wrap_params(tape, params, false);
  ForwardCtx ctx{tape, cfg, false, nullptr};
  UnitEmbeddings units = embed_units(ctx, pv, scene);
  Var mean_app = mean_appearance(ctx, units.appearance_rows);
  DecoderState state = initial_decoder_state(ctx);

  Hypothesis hyp;
  hyp.tokens = {Vocabulary::kBos};
  while (hyp.word_count() < max_len) {
    DecoderStepResult step = decoder_step(ctx, pv, state, hyp.tokens.back(), mean_app, units);
    state = step.state;
    const ad::Tensor& logprobs = tape.value(ad::log_softmax_rows(step.logits));
    int best = -1;
    double best_lp = 0.0;
    for (int tok = 0; tok < cfg.vocab_size; ++tok) {
      if (tok == Vocabulary::kPad || tok == Vocabulary::kBos) continue;
      double lp = logprobs.at(0, tok);
      if (best < 0 || lp > best_lp) {  // scan order gives lowest-id tie-break
        best = tok;
        best_lp = lp;
      }
    }
    hyp.log_prob += best_lp;
    hyp.tokens.push_back(best);
    hyp.steps.push_back(collect_diagnostics(tape, cfg, step.attention));
    if (best == Vocabulary::kEos) break;
  }
  hyp.finished = true;
  return hyp;
}

std::vector<Hypothesis> beam_search(const ModelParams& params, const ModelConfig& cfg,
                                    const SceneInputs& scene, const DecodeOptions& opts) {
  if (opts.beam < 1) throw Error("beam_search: beam must be >= 1");
  Tape tape;
  ParamVars pv = wrap_params(tape, params, false);
  ForwardCtx ctx{tape, cfg, false, nullptr};
  UnitEmbeddings units = embed_units(ctx, pv, scene);
  Var mean_app = mean_appearance(ctx, units.appearance_rows);

  struct Live {
    Hypothesis hyp;
    DecoderState state;
  };
  std::vector<Live> live;
  live.push_back({Hypothesis{{Vocabulary::kBos}, 0.0, false, {}}, initial_decoder_state(ctx)});
  std::vector<Hypothesis> pool;

  struct Candidate {
    double log_prob;
    int token;
    int parent;
  };

  while (!live.empty()) {
    std::vector<DecoderState> advanced;
    std::vector<StepDiagnostics> diags;
    std::vector<Candidate> candidates;
    for (size_t pi = 0; pi < live.size(); ++pi) {
      DecoderStepResult step =
          decoder_step(ctx, pv, live[pi].state, live[pi].hyp.tokens.back(), mean_app, units);
      advanced.push_back(step.state);
      diags.push_back(collect_diagnostics(tape, cfg, step.attention));
      const ad::Tensor& logprobs = tape.value(ad::log_softmax_rows(step.logits));
      for (int tok = 0; tok < cfg.vocab_size; ++tok) {
        if (tok == Vocabulary::kPad || tok == Vocabulary::kBos) continue;
        candidates.push_back(
            {live[pi].hyp.log_prob + logprobs.at(0, tok), tok, static_cast<int>(pi)});
      }
    }
    std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
      if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
      if (a.token != b.token) return a.token < b.token;
      return a.parent < b.parent;
    });
    size_t keep = std::min(candidates.size(), static_cast<size_t>(opts.beam));

    std::vector<Live> next;
    for (size_t k = 0; k < keep; ++k) {
      const Candidate& cand = candidates[k];
      Live child;
      child.hyp = live[static_cast<size_t>(cand.parent)].hyp;
      child.hyp.tokens.push_back(cand.token);
      child.hyp.log_prob = cand.log_prob;
      child.hyp.steps.push_back(diags[static_cast<size_t>(cand.parent)]);
      child.state = advanced[static_cast<size_t>(cand.parent)];
      if (cand.token == Vocabulary::kEos || child.hyp.word_count() >= opts.max_len) {
        child.hyp.finished = true;
        pool.push_back(std::move(child.hyp));
      } else {
        next.push_back(std::move(child));
      }
    }
    live = std::move(next);
  }

  std::stable_sort(pool.begin(), pool.end(), [&](const Hypothesis& a, const Hypothesis& b) {
    double sa = rank_score(a, opts.length_normalize);
    double sb = rank_score(b, opts.length_normalize);
    if (sa != sb) return sa > sb;
    return a.tokens < b.tokens;
  });
  return pool;
}

}  // namespace scenecap
