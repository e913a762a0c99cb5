#pragma once

#include <string>
#include <vector>

namespace scenecap {

struct EvalPair {
  std::vector<std::string> candidate;
  std::vector<std::vector<std::string>> references;  // at least one
};

/// Corpus-level BLEU-n: geometric mean of clipped modified precisions for
/// orders 1..n times the brevity penalty exp(min(0, 1 - r/c)), with the
/// per-pair reference length chosen closest to the candidate length
/// (ties toward the shorter reference).
double bleu(const std::vector<EvalPair>& corpus, int n);

/// CIDEr-D: TF-IDF weighted n-gram similarity with clipped candidate counts,
/// n = 1..4, Gaussian length penalty (sigma = 6), scaled by 10. IDF is
/// computed over the reference sets of the corpus being evaluated.
double cider_d(const std::vector<EvalPair>& corpus);

}  // namespace scenecap
