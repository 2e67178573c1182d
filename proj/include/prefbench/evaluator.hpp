// Agreement between a scorer and human choices: pair accuracy, per-source
// agreement matrices, and leave-one-out consistency of single annotators.
#pragma once

#include <cstddef>
#include <cstdint>
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

// Predictions within this distance of 0.5 are ties and earn half credit.
inline constexpr double kPredictionTieTolerance = 1e-12;

struct AccuracyCount {
  std::uint64_t n_pairs = 0;
  double n_correct = 0.0;
  // Empty when every pair was a human tie.
  std::optional<double> accuracy() const;
};

struct AccuracyReport {
  std::uint64_t n_pairs = 0;
  double n_correct = 0.0;
  std::optional<double> accuracy;
  std::uint64_t n_excluded_ties = 0;
  std::map<StyleCategory, AccuracyCount> per_style;
};

using StyleMap = std::map<std::string, StyleCategory, std::less<>>;
StyleMap style_map(const std::vector<PromptRecord>& prompts);

// Scores pre-computed probabilities that image_a wins against the labels.
// Human ties (label == 0.5) are excluded from the denominator.
AccuracyReport accuracy_from_predictions(const std::vector<PairwiseComparison>& pairs,
                                         std::span<const double> prob_a,
                                         const StyleMap* styles = nullptr);

AccuracyReport pairwise_accuracy(const ScoringModel& model,
                                 const std::vector<PairwiseComparison>& pairs,
                                 const EmbeddingSet& embeddings, int threads = 1,
                                 const StyleMap* styles = nullptr);

struct MatrixCell {
  double agreed = 0.0;  // scorer ties count half
  std::uint64_t votes = 0;
  std::optional<double> fraction() const;
};

// Unordered source pairs stored once under (min, max).
struct PairwiseMatrix {
  std::vector<std::string> model_ids;  // sorted
  std::map<std::pair<std::string, std::string>, MatrixCell> cells;

  // Absent (count 0) when the two sources never met.
  MatrixCell cell(const std::string& a, const std::string& b) const;
};

// scores[g][i] is the scorer's value for groups[g].image_ids[i].
PairwiseMatrix model_vs_model_matrix_from_scores(
    const std::vector<Group>& groups, const std::map<std::string, std::string>& image_sources,
    const std::vector<std::vector<double>>& scores);

PairwiseMatrix model_vs_model_matrix(const ScoringModel& model, const std::vector<Group>& groups,
                                     const std::map<std::string, std::string>& image_sources,
                                     const EmbeddingSet& embeddings, int threads = 1);

struct ConsistencyReport {
  std::optional<double> agreement;
  std::uint64_t n_votes = 0;          // votes that counted
  std::uint64_t n_excluded_votes = 0; // remainder was tied
  std::uint64_t n_groups = 0;         // groups with >= 3 annotators
};

// Leave-one-out: each vote is compared to the majority of the other
// annotators of the same group. Throws if no group has >= 3 annotators.
ConsistencyReport single_human_consistency(const std::vector<Group>& groups);

nlohmann::json accuracy_to_json(const AccuracyReport& report);
nlohmann::json matrix_to_json(const PairwiseMatrix& matrix);
nlohmann::json consistency_to_json(const ConsistencyReport& report);

// Rows of (label, accuracy report) rendered like a two-column accuracy table
// in percent with one decimal.
std::string render_accuracy_table(
    const std::vector<std::pair<std::string, AccuracyReport>>& rows);
// Upper-triangular agreement table; "-" below the diagonal and for absent cells.
std::string render_matrix_table(const PairwiseMatrix& matrix);

}  // namespace prefbench
