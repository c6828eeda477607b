// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <vector>

#include "avalign/clip.hpp"
#include "avalign/prior.hpp"

namespace avalign {

struct RetrievalReport {
  std::size_t n_queries = 0;
  std::map<std::size_t, double> recall_at;  // K -> fraction of queries with rank <= K
  double median_rank = 0.0;
  double mean_diagonal_cosine = 0.0;
  // p10/p50/p90 of the per-query true-pair cosines.
  std::array<double, 3> percentiles{0.0, 0.0, 0.0};
  std::vector<std::size_t> ranks;    // per query, 1-based
  std::vector<double> diag_cosines;  // per query
};

// Ranks each query row against all candidate rows by cosine; the true match
// for query i is candidate i. Ties resolve in favor of the lower candidate
// index. Rows need not be normalized.
RetrievalReport retrieval_from_embeddings(const MatF& queries, const MatF& candidates,
                                          const std::vector<std::size_t>& ks);

// Projects the test split of a paired dataset through the model and runs the
// audio->video retrieval above. `audio_to_video` false swaps the direction.
RetrievalReport retrieval_metrics(const ClipAlignModel<float>& model,
                                  const PairedDataset& dataset,
                                  const std::vector<std::size_t>& ks,
                                  bool audio_to_video = true);

struct FidelityReport {
  std::size_t n = 0;
  double mean_cosine = 0.0;
  double p10 = 0.0, p50 = 0.0, p90 = 0.0;
  std::vector<double> cosines;  // per condition
};

// Draws one goal sample per condition and reports cosine(sample, target)
// statistics.
FidelityReport prior_fidelity(const CvaePrior<float>& prior, const MatF& condition,
                              const MatF& target, std::uint64_t seed);

// Report JSON: {"n_queries", "recall_at": {"1": ...}, "median_rank",
// "mean_diagonal_cosine", "percentiles": {"p10", "p50", "p90"}}.
void emit_report(const RetrievalReport& report, const std::filesystem::path& path);
RetrievalReport read_report(const std::filesystem::path& path);

// One line per query: index, rank, cosine of the true pair.
void write_ranks_csv(const std::filesystem::path& path, const RetrievalReport& report);

// Linear-interpolation percentile of an unsorted sample, p in [0, 100].
double percentile(std::vector<double> values, double p);

}  // namespace avalign
