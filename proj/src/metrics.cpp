#include "scenecap/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdlib>
#include <map>

#include "scenecap/util.hpp"

namespace scenecap {

namespace {

using NgramCounts = std::map<std::vector<std::string>, double>;

NgramCounts count_ngrams(const std::vector<std::string>& tokens, int n) {
  NgramCounts counts;
  if (static_cast<int>(tokens.size()) < n) return counts;
  for (size_t i = 0; i + static_cast<size_t>(n) <= tokens.size(); ++i)
    counts[std::vector<std::string>(tokens.begin() + static_cast<long>(i),
                                    tokens.begin() + static_cast<long>(i) + n)] += 1.0;
  return counts;
}

}  // namespace

double bleu(const std::vector<EvalPair>& corpus, int n) {
  if (n < 1 || n > 4) throw Error("bleu: order must be in 1..4");
  std::vector<double> matched(static_cast<size_t>(n), 0.0);
  std::vector<double> total(static_cast<size_t>(n), 0.0);
  double cand_len = 0.0;
  double ref_len = 0.0;

  for (const EvalPair& pair : corpus) {
    if (pair.references.empty()) throw Error("bleu: pair without references");
    cand_len += static_cast<double>(pair.candidate.size());
    // Effective reference length: closest to the candidate, ties -> shorter.
    long best_ref = static_cast<long>(pair.references[0].size());
    for (const auto& ref : pair.references) {
      long len = static_cast<long>(ref.size());
      long cand = static_cast<long>(pair.candidate.size());
      if (std::labs(len - cand) < std::labs(best_ref - cand) ||
          (std::labs(len - cand) == std::labs(best_ref - cand) && len < best_ref))
        best_ref = len;
    }
    ref_len += static_cast<double>(best_ref);

    for (int order = 1; order <= n; ++order) {
      NgramCounts cand_counts = count_ngrams(pair.candidate, order);
      NgramCounts max_ref;
      for (const auto& ref : pair.references)
        for (const auto& [gram, count] : count_ngrams(ref, order))
          max_ref[gram] = std::max(max_ref[gram], count);
      for (const auto& [gram, count] : cand_counts) {
        total[static_cast<size_t>(order - 1)] += count;
        auto it = max_ref.find(gram);
        if (it != max_ref.end())
          matched[static_cast<size_t>(order - 1)] += std::min(count, it->second);
      }
    }
  }

  double log_precision = 0.0;
  for (int order = 1; order <= n; ++order) {
    double m = matched[static_cast<size_t>(order - 1)];
    double t = total[static_cast<size_t>(order - 1)];
    if (m == 0.0 || t == 0.0) return 0.0;
    log_precision += std::log(m / t) / n;
  }
  if (cand_len == 0.0) return 0.0;
  double bp = cand_len < ref_len ? std::exp(1.0 - ref_len / cand_len) : 1.0;
  return bp * std::exp(log_precision);
}

double cider_d(const std::vector<EvalPair>& corpus) {
  constexpr int kMaxOrder = 4;
  constexpr double kSigma = 6.0;
  if (corpus.empty()) throw Error("cider_d: empty corpus");

  // Document frequency: per image, each n-gram appearing in any reference
  // counts once.
  std::array<NgramCounts, kMaxOrder> doc_freq;
  for (const EvalPair& pair : corpus) {
    if (pair.references.empty()) throw Error("cider_d: pair without references");
    for (int order = 1; order <= kMaxOrder; ++order) {
      NgramCounts seen;
      for (const auto& ref : pair.references)
        for (const auto& [gram, count] : count_ngrams(ref, order)) seen[gram] = 1.0;
      for (const auto& [gram, one] : seen) doc_freq[static_cast<size_t>(order - 1)][gram] += 1.0;
    }
  }
  double log_n_images = std::log(static_cast<double>(corpus.size()));

  struct TfIdf {
    std::array<NgramCounts, kMaxOrder> vec;
    std::array<double, kMaxOrder> norm{};
    double length = 0.0;
  };
  auto vectorize = [&](const std::vector<std::string>& tokens) {
    TfIdf out;
    out.length = static_cast<double>(tokens.size());
    for (int order = 1; order <= kMaxOrder; ++order) {
      auto& slot = out.vec[static_cast<size_t>(order - 1)];
      double norm_sq = 0.0;
      for (const auto& [gram, count] : count_ngrams(tokens, order)) {
        auto it = doc_freq[static_cast<size_t>(order - 1)].find(gram);
        double df = it == doc_freq[static_cast<size_t>(order - 1)].end() ? 0.0 : it->second;
        double idf = log_n_images - std::log(std::max(1.0, df));
        double w = count * idf;
        slot[gram] = w;
        norm_sq += w * w;
      }
      out.norm[static_cast<size_t>(order - 1)] = std::sqrt(norm_sq);
    }
    return out;
  };

  double score_sum = 0.0;
  for (const EvalPair& pair : corpus) {
    TfIdf cand = vectorize(pair.candidate);
    std::array<double, kMaxOrder> per_order{};
    for (const auto& ref_tokens : pair.references) {
      TfIdf ref = vectorize(ref_tokens);
      double delta = cand.length - ref.length;
      double penalty = std::exp(-(delta * delta) / (2.0 * kSigma * kSigma));
      for (int order = 0; order < kMaxOrder; ++order) {
        double dot = 0.0;
        for (const auto& [gram, w] : cand.vec[static_cast<size_t>(order)]) {
          auto it = ref.vec[static_cast<size_t>(order)].find(gram);
          if (it != ref.vec[static_cast<size_t>(order)].end())
            dot += std::min(w, it->second) * it->second;  // clipped candidate counts
        }
        double denom = cand.norm[static_cast<size_t>(order)] * ref.norm[static_cast<size_t>(order)];
        per_order[static_cast<size_t>(order)] += denom > 0.0 ? penalty * dot / denom : 0.0;
      }
    }
    double pair_score = 0.0;
    for (int order = 0; order < kMaxOrder; ++order)
      pair_score += per_order[static_cast<size_t>(order)] /
                    (kMaxOrder * static_cast<double>(pair.references.size()));
    score_sum += 10.0 * pair_score;
  }
  return score_sum / static_cast<double>(corpus.size());
}

}  // namespace scenecap
