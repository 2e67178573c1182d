// Planted worlds: a known scoring model plus random unit-sphere embeddings,
// from which labels with a known Bayes accuracy can be drawn.
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "prefbench/dataset.hpp"
#include "prefbench/embedding_store.hpp"
#include "prefbench/scorer.hpp"

namespace prefbench {

struct WorldConfig {
  std::size_t dim_t = 32;
  std::size_t dim_i = 32;
  std::size_t d = 16;
  std::size_t n_prompts = 100;
  std::size_t images_per_prompt = 4;
  // Sharpness of the planted preferences; lower means noisier sampled labels.
  double planted_inv_temperature = 20.0;
  std::uint64_t seed = 0;
};

struct PlantedWorld {
  WorldConfig config;
  ScoringModel planted;
  std::vector<PromptRecord> prompts;
  std::vector<std::vector<std::string>> image_ids;  // per prompt
  Matrix prompt_embeddings;  // binary64, unit rows
  Matrix image_embeddings;   // rows follow image_ids flattened in prompt order
  std::shared_ptr<const EmbeddingSet> embeddings;  // binary32-rounded view

  std::size_t n_images() const noexcept { return image_embeddings.rows(); }
  // Generating-model id of image slot `i` in every group ("model_i").
  static std::string source_of_slot(std::size_t slot);
  std::map<std::string, std::string> image_sources() const;
};

PlantedWorld generate_world(const WorldConfig& config);

enum class LabelMode { kHardArgmax, kSampled };
LabelMode parse_label_mode(const std::string& text);

// Up to pairs_per_prompt distinct image pairs per prompt, labelled by the
// planted model. n_annotators = 1. Sorted by (prompt_id, image_a, image_b).
std::vector<PairwiseComparison> label_pairs(const PlantedWorld& world, std::size_t pairs_per_prompt,
                                            LabelMode mode, std::uint64_t seed);

// Planted probability that image_a wins, per pair.
std::vector<double> planted_probabilities(const PlantedWorld& world,
                                          const std::vector<PairwiseComparison>& pairs);
// Mean of max(p, 1 - p): the best achievable expected accuracy on sampled labels.
double bayes_accuracy(const PlantedWorld& world, const std::vector<PairwiseComparison>& pairs);

// One group per prompt; each annotator's ranking is sampled sequentially
// from the softmax of planted scores (kSampled) or sorted by score.
std::vector<Group> sample_rankings(const PlantedWorld& world, std::size_t n_annotators,
                                   LabelMode mode, std::uint64_t seed);

struct FixtureOptions {
  std::size_t pairs_per_prompt = 5;
  LabelMode label_mode = LabelMode::kSampled;
  std::size_t n_annotators = 1;
  std::size_t chunk_size = 80;
};

WorldConfig parse_world_config(const nlohmann::json& doc, const WorldConfig& base = {});
FixtureOptions parse_fixture_options(const nlohmann::json& doc, const FixtureOptions& base = {});

// Writes text.pev, image.pev, embeddings.pev (when dim_t == dim_i),
// dataset.json, pairs.json, sources.json, planted.ckpt and one
// benchmark_<source>.json per generating model. Returns a summary.
nlohmann::json write_fixture(const PlantedWorld& world, const FixtureOptions& options,
                             const std::filesystem::path& dir);

}  // namespace prefbench
