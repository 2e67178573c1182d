// KL preference loss, its analytic gradient, AdamW with decoupled weight
// decay, the warmup + cosine learning-rate schedule, and the training loop.
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "json.hpp"
#include "prefbench/common.hpp"
#include "prefbench/dataset.hpp"
#include "prefbench/embedding_store.hpp"
#include "prefbench/scorer.hpp"

namespace prefbench {

struct TrainConfig {
  std::int64_t total_steps = 4000;
  std::int64_t warmup_steps = 500;
  double peak_lr = 3.3e-6;
  double weight_decay = 0.35;
  std::int64_t batch_size = 128;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  // Prompt-level holdout carved from the training pairs; 0 disables it.
  double holdout_fraction = 0.0;

  void validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

// The published full-scale schedule.
TrainConfig paper_config();
// Same loss and optimizer, sized for thousands of pairs and small heads.
TrainConfig desk_config();

// Missing fields keep the values of `base`; unknown fields are an error.
TrainConfig parse_train_config(const nlohmann::json& doc, const TrainConfig& base = {});
nlohmann::json train_config_to_json(const TrainConfig& config);
// FNV-1a over the canonical JSON form.
std::uint64_t config_hash(const TrainConfig& config);

// Same shapes as ScoringModel.
struct Gradient {
  Matrix text_projection;
  Matrix image_projection;
  double log_inv_temperature = 0.0;

  static Gradient zeros_like(const ScoringModel& model);
  void add(const Gradient& other);
  void scale(double factor);
};

struct OptimizerState {
  Gradient first_moment;
  Gradient second_moment;
  std::int64_t step = 0;

  static OptimizerState for_model(const ScoringModel& model);
};

struct PairExample {
  std::span<const double> prompt;
  std::span<const double> image_a;
  std::span<const double> image_b;
  double label = 0.5;  // probability that image_a is preferred
};

// KL(y || y_hat) with 0 log 0 = 0.
double kl_preference_loss(std::array<double, 2> y, std::array<double, 2> y_hat);

// The same loss evaluated from scores through log-sigmoids.
double pair_loss_from_scores(double label, double score_a, double score_b);

double pair_loss(const ScoringModel& model, const PairExample& example);
double batch_loss(const ScoringModel& model, std::span<const PairExample> batch);

// Gradient of the mean batch loss. Examples are reduced in fixed blocks in
// index order, so the result is bitwise independent of `threads`.
Gradient loss_gradient(const ScoringModel& model, std::span<const PairExample> batch,
                       int threads = 1);

double lr_at_step(const TrainConfig& config, std::int64_t step);

// One bias-corrected AdamW update of a flat parameter block. `step` is the
// 1-based update count.
void adamw_update(std::span<double> params, std::span<const double> grads,
                  std::span<double> first_moment, std::span<double> second_moment,
                  std::int64_t step, double lr, double weight_decay,
                  const TrainConfig& config);

// Decays the projections only; the temperature is never decayed.
void adamw_step(ScoringModel& model, const Gradient& grads, OptimizerState& state, double lr,
                const TrainConfig& config);

// Resolves every id of `pairs` against `embeddings`; throws naming the first
// unresolvable id.
std::vector<PairExample> resolve_pairs(const std::vector<PairwiseComparison>& pairs,
                                       const EmbeddingSet& embeddings);

struct TrainReport {
  std::vector<double> loss_trace;
  std::optional<double> train_accuracy;
  std::optional<double> heldout_accuracy;
  std::size_t n_train_pairs = 0;
  std::size_t n_heldout_pairs = 0;
  double wall_clock_seconds = 0.0;
  std::uint64_t seed = 0;
};

// Wall-clock time is left out so identical runs serialize identically.
nlohmann::json train_report_to_json(const TrainReport& report);

struct TrainOptions {
  int threads = 1;
  std::function<void(std::int64_t step, double loss, double lr)> on_step;
};

struct TrainResult {
  ScoringModel model;
  TrainReport report;
};

TrainResult train(ScoringModel model, const std::vector<PairwiseComparison>& pairs,
                  const EmbeddingSet& embeddings, const TrainConfig& config,
                  const std::vector<PairwiseComparison>& heldout = {},
                  const TrainOptions& options = {});

}  // namespace prefbench
