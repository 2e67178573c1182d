// Preference datasets: prompts, image groups with per-annotator rankings,
// and the pairwise comparisons derived from them.
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "prefbench/common.hpp"
#include "json.hpp"

namespace prefbench {

enum class StyleCategory { kAnimation, kConceptArt, kPainting, kPhoto, kOther };

// Case-insensitive; accepts "concept-art", "concept_art" and "conceptart".
StyleCategory parse_style(std::string_view text);
std::optional<StyleCategory> try_parse_style(std::string_view text);
// Lower-case canonical key ("animation", "concept-art", ...).
const char* style_key(StyleCategory style);
// Display name ("Animation", "Concept-art", ...).
const char* style_name(StyleCategory style);
inline constexpr StyleCategory kAllStyles[] = {
    StyleCategory::kAnimation, StyleCategory::kConceptArt, StyleCategory::kPainting,
    StyleCategory::kPhoto, StyleCategory::kOther};

struct PromptRecord {
  std::string prompt_id;
  std::string text;
  StyleCategory style = StyleCategory::kOther;
};

struct RankingAnnotation {
  std::string annotator_id;
  std::vector<std::string> ranking;  // best first
};

struct Group {
  std::string prompt_id;
  std::vector<std::string> image_ids;
  std::vector<RankingAnnotation> annotations;
};

struct PairwiseComparison {
  std::string prompt_id;
  std::string image_a;  // image_a < image_b
  std::string image_b;
  double label = 0.5;   // fraction of annotators preferring image_a
  std::uint32_t n_annotators = 1;

  std::uint32_t votes_for_a() const;
  friend bool operator==(const PairwiseComparison&, const PairwiseComparison&) = default;
};

struct Dataset {
  std::vector<PromptRecord> prompts;
  std::vector<Group> groups;
};

struct DatasetStats {
  std::uint64_t n_groups = 0;
  std::uint64_t n_images = 0;  // distinct image ids across groups
  std::uint64_t n_prompts = 0;
  double unique_prompt_fraction = 0.0;
  std::map<std::string, std::uint64_t> n_pairs_per_annotator;
  std::uint64_t n_total_binary_comparisons = 0;
};

// Parses and validates. Violations name the group index and the field.
Dataset parse_dataset(const nlohmann::json& doc);
Dataset load_dataset(const std::filesystem::path& path);
nlohmann::json dataset_to_json(const Dataset& dataset);
void write_dataset(const Dataset& dataset, const std::filesystem::path& path);

// One vote per annotator per unordered pair in each group, merged per
// (prompt_id, image_a, image_b) into a soft label. Sorted by that key.
std::vector<PairwiseComparison> rankings_to_pairs(const std::vector<Group>& groups);

// Sum of n_annotators over the merged records.
std::uint64_t count_votes(const std::vector<PairwiseComparison>& pairs);

DatasetStats dataset_stats(const std::vector<PromptRecord>& prompts,
                           const std::vector<Group>& groups);
nlohmann::json stats_to_json(const DatasetStats& stats);

struct PairSplit {
  std::vector<PairwiseComparison> train;
  std::vector<PairwiseComparison> test;
};

// Holds out round(holdout_fraction * n_prompts) whole prompts (clamped to
// [1, n_prompts - 1]). Deterministic for a given seed.
PairSplit split_pairs(const std::vector<PairwiseComparison>& pairs, std::uint64_t seed,
                      double holdout_fraction);

std::vector<PairwiseComparison> parse_pairs(const nlohmann::json& doc);
std::vector<PairwiseComparison> load_pairs(const std::filesystem::path& path);
nlohmann::json pairs_to_json(const std::vector<PairwiseComparison>& pairs);
void write_pairs(const std::vector<PairwiseComparison>& pairs,
                 const std::filesystem::path& path);

// image_id -> generating model id, from {"sources": {"img": "model", ...}}.
std::map<std::string, std::string> load_image_sources(const std::filesystem::path& path);

// Shared JSON file helpers.
nlohmann::json read_json_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace prefbench
