// Chunked per-style benchmark statistics, flat prompt-list scoring, model
// ranking, and subsampling stability curves.
//
// A prompt's score is the mean raw (pre-temperature) cosine between its
// prompt embedding and each of its generated images. Within a style the
// prompts are cut into consecutive chunks [0, c), [c, 2c), ... in file
// order; the style is reported as the mean and sample standard deviation
// (divisor n - 1) of the chunk means.
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "prefbench/dataset.hpp"
#include "prefbench/embedding_store.hpp"
#include "prefbench/scorer.hpp"

namespace prefbench {

inline constexpr std::size_t kDefaultChunkSize = 80;

struct BenchmarkPrompt {
  std::string prompt_id;
  std::vector<std::string> image_ids;
};

struct BenchmarkInput {
  std::string model_id;
  std::map<StyleCategory, std::vector<BenchmarkPrompt>> styles;
  std::map<std::string, std::vector<BenchmarkPrompt>> flat_lists;
  std::size_t chunk_size = kDefaultChunkSize;

  void validate() const;
};

struct StyleResult {
  StyleCategory style = StyleCategory::kOther;
  std::vector<double> chunk_means;
  double mean = 0.0;
  double std = 0.0;
};

struct BenchmarkReport {
  std::string model_id;
  std::vector<StyleResult> styles;
  std::map<std::string, double> flat_scores;

  const StyleResult* find(StyleCategory style) const;
};

BenchmarkInput parse_benchmark_input(const nlohmann::json& doc,
                                     std::size_t chunk_size = kDefaultChunkSize);
BenchmarkInput load_benchmark_input(const std::filesystem::path& path,
                                    std::size_t chunk_size = kDefaultChunkSize);
nlohmann::json benchmark_input_to_json(const BenchmarkInput& input);

double prompt_score(const ScoringModel& model, const BenchmarkPrompt& prompt,
                    const EmbeddingSet& embeddings);
std::vector<double> prompt_scores(const ScoringModel& model,
                                  const std::vector<BenchmarkPrompt>& prompts,
                                  const EmbeddingSet& embeddings, int threads = 1);

// Throws unless scores.size() is a positive multiple of chunk_size.
StyleResult chunked_statistics(StyleCategory style, std::span<const double> scores,
                               std::size_t chunk_size);

BenchmarkReport benchmark_model(const ScoringModel& model, const BenchmarkInput& input,
                                const EmbeddingSet& embeddings, int threads = 1);

double flat_benchmark(const ScoringModel& model, const std::vector<BenchmarkPrompt>& prompts,
                      const EmbeddingSet& embeddings, int threads = 1);

// Descending by mean, ties by model id.
std::vector<std::pair<std::string, double>> rank_models(
    const std::vector<BenchmarkReport>& reports, StyleCategory style);

struct StabilityPoint {
  std::size_t n = 0;
  double std = 0.0;  // sample std of the resampled subset means
};

// For each n, `resamples` subsets of size n drawn without replacement.
std::vector<StabilityPoint> stability_from_scores(std::span<const double> scores,
                                                  std::span<const std::size_t> sizes,
                                                  std::size_t resamples, std::uint64_t seed);

std::vector<StabilityPoint> stability_curve(const ScoringModel& model,
                                            const std::vector<BenchmarkPrompt>& prompts,
                                            const EmbeddingSet& embeddings,
                                            std::span<const std::size_t> sizes,
                                            std::size_t resamples, std::uint64_t seed,
                                            int threads = 1);

nlohmann::json benchmark_report_to_json(const BenchmarkReport& report);
nlohmann::json ranking_to_json(const std::vector<std::pair<std::string, double>>& ranking);
nlohmann::json stability_to_json(const std::vector<StabilityPoint>& curve);

// "0.2726 ± 1.56×10⁻³": four-decimal mean, std in units of 10^-3.
std::string format_mean_std(double mean, double std);
// One row per report; a column per style present, then each flat list.
std::string render_benchmark_table(const std::vector<BenchmarkReport>& reports);
std::string render_stability_table(const std::vector<StabilityPoint>& curve);

}  // namespace prefbench
