// SPDX-License-Identifier: Apache-2.0
#include "avalign/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <nlohmann/json.hpp>

namespace avalign {

double percentile(std::vector<double> values, double p) {
  if (values.empty()) throw ValidationError("percentile of empty sample");
  std::sort(values.begin(), values.end());
  const double pos = p / 100.0 * double(values.size() - 1);
  const auto lo = std::size_t(std::floor(pos));
  if (lo + 1 >= values.size()) return values.back();
  const double frac = pos - double(lo);
  return values[lo] * (1.0 - frac) + values[lo + 1] * frac;
}

RetrievalReport retrieval_from_embeddings(const MatF& queries, const MatF& candidates,
                                          const std::vector<std::size_t>& ks) {
  if (queries.rows == 0) throw ValidationError("retrieval: empty query set");
  if (queries.rows != candidates.rows)
    throw ValidationError("retrieval: query/candidate counts differ (" +
                          std::to_string(queries.rows) + " vs " +
                          std::to_string(candidates.rows) + ")");
  if (queries.cols != candidates.cols)
    throw DimensionError("retrieval: embedding dims differ");
  const std::size_t n = queries.rows;
  for (std::size_t k : ks)
    if (k < 1 || k > n)
      throw ValidationError("retrieval: K = " + std::to_string(k) +
                            " outside [1, N] with N = " + std::to_string(n));

  MatF q = queries;
  MatF c = candidates;
  l2_normalize_rows_inplace(q);
  l2_normalize_rows_inplace(c);
  const MatF cosines = gemm_nt(q, c);  // n x n

  RetrievalReport report;
  report.n_queries = n;
  report.ranks.resize(n);
  report.diag_cosines.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const float* row = cosines.row(i);
    const float truth = row[i];
    std::size_t rank = 1;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      if (row[j] > truth || (row[j] == truth && j < i)) ++rank;
    }
    report.ranks[i] = rank;
    report.diag_cosines[i] = double(truth);
  }

  for (std::size_t k : ks) {
    std::size_t hits = 0;
    for (std::size_t r : report.ranks)
      if (r <= k) ++hits;
    report.recall_at[k] = double(hits) / double(n);
  }

  std::vector<std::size_t> sorted = report.ranks;
  std::sort(sorted.begin(), sorted.end());
  report.median_rank = n % 2 == 1
                           ? double(sorted[n / 2])
                           : 0.5 * (double(sorted[n / 2 - 1]) + double(sorted[n / 2]));

  double mean = 0.0;
  for (double v : report.diag_cosines) mean += v;
  report.mean_diagonal_cosine = mean / double(n);
  report.percentiles = {percentile(report.diag_cosines, 10.0),
                        percentile(report.diag_cosines, 50.0),
                        percentile(report.diag_cosines, 90.0)};
  return report;
}

RetrievalReport retrieval_metrics(const ClipAlignModel<float>& model,
                                  const PairedDataset& dataset,
                                  const std::vector<std::size_t>& ks, bool audio_to_video) {
  const std::vector<std::size_t> test_entries = dataset.entry_indices(Split::test);
  if (test_entries.empty()) throw ValidationError("retrieval_metrics: empty test split");

  MatF audio(test_entries.size(), dataset.audio.dim);
  MatF video(test_entries.size(), dataset.video.dim);
  for (std::size_t i = 0; i < test_entries.size(); ++i) {
    const PairEntry& e = dataset.manifest.entries[test_entries[i]];
    std::copy(dataset.audio.row(e.audio_row), dataset.audio.row(e.audio_row) + dataset.audio.dim,
              audio.row(i));
    std::copy(dataset.video.row(e.video_row), dataset.video.row(e.video_row) + dataset.video.dim,
              video.row(i));
  }
  const MatF a_hat = project_audio(model, audio);
  const MatF v_hat = project_video(model, video);
  return audio_to_video ? retrieval_from_embeddings(a_hat, v_hat, ks)
                        : retrieval_from_embeddings(v_hat, a_hat, ks);
}

FidelityReport prior_fidelity(const CvaePrior<float>& prior, const MatF& condition,
                              const MatF& target, std::uint64_t seed) {
  if (condition.rows == 0) throw ValidationError("prior_fidelity: empty input");
  if (condition.rows != target.rows)
    throw ValidationError("prior_fidelity: condition/target counts differ");
  const MatF samples = sample_goal(prior, condition, seed, 1);

  FidelityReport report;
  report.n = condition.rows;
  report.cosines.resize(report.n);
  for (std::size_t i = 0; i < report.n; ++i) {
    const float* a = samples.row(i);
    const float* b = target.row(i);
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t c = 0; c < target.cols; ++c) {
      dot += double(a[c]) * double(b[c]);
      na += double(a[c]) * double(a[c]);
      nb += double(b[c]) * double(b[c]);
    }
    const double denom = std::sqrt(na) * std::sqrt(nb);
    report.cosines[i] = denom > 0.0 ? dot / denom : 0.0;
  }
  double mean = 0.0;
  for (double v : report.cosines) mean += v;
  report.mean_cosine = mean / double(report.n);
  report.p10 = percentile(report.cosines, 10.0);
  report.p50 = percentile(report.cosines, 50.0);
  report.p90 = percentile(report.cosines, 90.0);
  return report;
}

void emit_report(const RetrievalReport& report, const std::filesystem::path& path) {
  nlohmann::json recall;
  for (const auto& [k, v] : report.recall_at) recall[std::to_string(k)] = v;
  nlohmann::json j = {{"n_queries", report.n_queries},
                      {"recall_at", recall},
                      {"median_rank", report.median_rank},
                      {"mean_diagonal_cosine", report.mean_diagonal_cosine},
                      {"percentiles",
                       {{"p10", report.percentiles[0]},
                        {"p50", report.percentiles[1]},
                        {"p90", report.percentiles[2]}}}};
  std::ofstream os(path);
  if (!os) throw IoError("cannot open for writing: " + path.string());
  os << j.dump(2) << "\n";
  if (!os) throw IoError("write failed: " + path.string());
}

RetrievalReport read_report(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open for reading: " + path.string());
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("report parse error: " + std::string(e.what()));
  }
  RetrievalReport report;
  try {
    report.n_queries = j.at("n_queries").get<std::size_t>();
    for (const auto& [k, v] : j.at("recall_at").items())
      report.recall_at[std::stoul(k)] = v.get<double>();
    report.median_rank = j.at("median_rank").get<double>();
    report.mean_diagonal_cosine = j.at("mean_diagonal_cosine").get<double>();
    report.percentiles = {j.at("percentiles").at("p10").get<double>(),
                          j.at("percentiles").at("p50").get<double>(),
                          j.at("percentiles").at("p90").get<double>()};
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("bad report: " + std::string(e.what()));
  }
  return report;
}

void write_ranks_csv(const std::filesystem::path& path, const RetrievalReport& report) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open for writing: " + path.string());
  os << "query,rank,cosine\n";
  char buf[96];
  for (std::size_t i = 0; i < report.ranks.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%zu,%zu,%.9g\n", i, report.ranks[i],
                  report.diag_cosines[i]);
    os << buf;
  }
  if (!os) throw IoError("write failed: " + path.string());
}

}  // namespace avalign
