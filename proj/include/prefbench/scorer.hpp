// Temperature-scaled cosine scoring over frozen embeddings.
//
// A prompt embedding t (dim_t) and an image embedding x (dim_i) are
// projected to a shared space of dimension d,
//
//   u = text_projection^T t,   v = image_projection^T x,
//
// and scored as cos(u, v) / tau with tau = exp(-log_inv_temperature).
// Two images compete through a two-way softmax of their scores.
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "prefbench/common.hpp"

namespace prefbench {

inline constexpr std::uint32_t kCheckpointFormatVersion = 1;
inline constexpr char kCheckpointMagic[4] = {'P', 'C', 'K', '1'};

struct ScoringModel {
  Matrix text_projection;   // dim_t x d
  Matrix image_projection;  // dim_i x d
  double log_inv_temperature = 0.0;

  std::size_t text_dim() const noexcept { return text_projection.rows(); }
  std::size_t image_dim() const noexcept { return image_projection.rows(); }
  std::size_t dim() const noexcept { return text_projection.cols(); }
  double temperature() const;
  double inv_temperature() const;

  // Throws unless the projections share d and every value is finite.
  void validate() const;

  friend bool operator==(const ScoringModel&, const ScoringModel&) = default;
};

// log(100): the conventional contrastive logit scale.
double default_log_inv_temperature();

// Identity projections (padded or truncated to dim_x x d) plus uniform
// noise in [-noise, noise]. d defaults to min(dim_t, dim_i).
ScoringModel init_model(std::size_t dim_t, std::size_t dim_i,
                        std::optional<std::size_t> d, std::uint64_t seed,
                        double noise = 1e-3);

struct PairPrediction {
  double score_a = 0.0;
  double score_b = 0.0;
  double prob_a = 0.5;
  double prob_b = 0.5;
};

// Numerically stable logistic and its logarithm.
double logistic(double x);
double log_logistic(double x);

std::vector<double> project(const Matrix& projection, std::span<const double> x);

double raw_similarity(const ScoringModel& model, std::span<const double> prompt_emb,
                      std::span<const double> image_emb);
double score(const ScoringModel& model, std::span<const double> prompt_emb,
             std::span<const double> image_emb);
PairPrediction predict_pair(const ScoringModel& model, std::span<const double> prompt_emb,
                            std::span<const double> emb_a, std::span<const double> emb_b);
PairPrediction predict_from_scores(double score_a, double score_b);

// Checkpoint: "PCK1", u32 header length, JSON header
// {dim_t, dim_i, d, log_inv_temperature, format_version}, then both
// projections as little-endian binary64, row-major, text first.
std::vector<std::uint8_t> encode_checkpoint(const ScoringModel& model);
ScoringModel decode_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const ScoringModel& model, const std::filesystem::path& path);
ScoringModel load_checkpoint(const std::filesystem::path& path);

}  // namespace prefbench
