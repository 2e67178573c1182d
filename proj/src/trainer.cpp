#include "prefbench/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "prefbench/evaluator.hpp"

namespace prefbench {
namespace {

constexpr std::size_t kReductionBlock = 16;

double xlogx(double x) { return x > 0.0 ? x * std::log(x) : 0.0; }

// Projected and normalized features of one example.
struct Forward {
  std::vector<double> u, va, vb;  // unit vectors
  double norm_u = 0, norm_a = 0, norm_b = 0;
  double cos_a = 0, cos_b = 0;
  double score_a = 0, score_b = 0;
};

std::vector<double> normalized(std::vector<double> v, double& norm) {
  double s = 0.0;
  for (double x : v) s += x * x;
  norm = std::sqrt(s);
  if (!(norm > 0.0) || !std::isfinite(norm)) {
    throw Error(ErrorCode::kNumeric, "zero or non-finite projected vector");
  }
  for (double& x : v) x /= norm;
  return v;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

Forward forward(const ScoringModel& model, const PairExample& ex) {
  Forward f;
  f.u = normalized(project(model.text_projection, ex.prompt), f.norm_u);
  f.va = normalized(project(model.image_projection, ex.image_a), f.norm_a);
  f.vb = normalized(project(model.image_projection, ex.image_b), f.norm_b);
  const double tau = model.temperature();
  f.cos_a = dot(f.u, f.va);
  f.cos_b = dot(f.u, f.vb);
  f.score_a = f.cos_a / tau;
  f.score_b = f.cos_b / tau;
  return f;
}

void outer_add(Matrix& m, std::span<const double> x, std::span<const double> g) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const double xr = x[r];
    if (xr == 0.0) continue;
    auto row = m.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += xr * g[c];
  }
}

// Adds the gradient of one example's loss (not averaged) into `out`.
void accumulate_example(const ScoringModel& model, const PairExample& ex, Gradient& out) {
  const Forward f = forward(model, ex);
  const double q = logistic(f.score_a - f.score_b);
  // dL/ds_a = q - y_a, dL/ds_b = -(q - y_a).
  const double ds_a = q - ex.label;
  const double ds_b = -ds_a;
  const double k = 1.0 / model.temperature();
  const std::size_t d = model.dim();

  // d cos(u, v) / d u_raw = (v_hat - cos * u_hat) / |u|
  std::vector<double> gu(d), ga(d), gb(d);
  for (std::size_t c = 0; c < d; ++c) {
    gu[c] = k * (ds_a * (f.va[c] - f.cos_a * f.u[c]) + ds_b * (f.vb[c] - f.cos_b * f.u[c])) /
            f.norm_u;
    ga[c] = k * ds_a * (f.u[c] - f.cos_a * f.va[c]) / f.norm_a;
    gb[c] = k * ds_b * (f.u[c] - f.cos_b * f.vb[c]) / f.norm_b;
  }
  outer_add(out.text_projection, ex.prompt, gu);
  outer_add(out.image_projection, ex.image_a, ga);
  outer_add(out.image_projection, ex.image_b, gb);
  // d s / d log_inv_temperature = s
  out.log_inv_temperature += ds_a * f.score_a + ds_b * f.score_b;
}

void check_example_dims(const ScoringModel& model, const PairExample& ex) {
  if (ex.prompt.size() != model.text_dim() || ex.image_a.size() != model.image_dim() ||
      ex.image_b.size() != model.image_dim()) {
    throw Error(ErrorCode::kInvalidArgument, "example dimensions do not match the model");
  }
}

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace

void TrainConfig::validate() const {
  auto bad = [](const std::string& what) {
    throw Error(ErrorCode::kValidation, "train config: " + what);
  };
  if (total_steps < 0) bad("total_steps must be non-negative");
  if (warmup_steps < 0) bad("warmup_steps must be non-negative");
  if (total_steps > 0 && warmup_steps >= total_steps) bad("warmup_steps must be < total_steps");
  if (!(peak_lr > 0.0) || !std::isfinite(peak_lr)) bad("peak_lr must be positive");
  if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) {
    bad("weight_decay must be non-negative");
  }
  if (batch_size < 1) bad("batch_size must be >= 1");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) bad("beta1 must lie in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) bad("beta2 must lie in [0, 1)");
  if (!(epsilon > 0.0)) bad("epsilon must be positive");
  if (!(holdout_fraction >= 0.0 && holdout_fraction < 1.0)) {
    bad("holdout_fraction must lie in [0, 1)");
  }
}

TrainConfig paper_config() { return TrainConfig{}; }

TrainConfig desk_config() {
  TrainConfig c;
  c.total_steps = 1500;
  c.warmup_steps = 100;
  c.peak_lr = 1e-2;
  c.weight_decay = 1e-4;
  c.batch_size = 64;
  return c;
}

TrainConfig parse_train_config(const nlohmann::json& doc, const TrainConfig& base) {
  if (!doc.is_object()) throw Error(ErrorCode::kValidation, "train config must be an object");
  TrainConfig c = base;
  try {
    // A profile replaces the base before the remaining keys override it.
    if (auto p = doc.find("profile"); p != doc.end()) {
      const auto name = p->get<std::string>();
      if (name == "paper") c = paper_config();
      else if (name == "desk") c = desk_config();
      else throw Error(ErrorCode::kValidation, "train config: unknown profile '" + name + "'");
    }
    for (auto it = doc.begin(); it != doc.end(); ++it) {
      const std::string& key = it.key();
      const auto& v = it.value();
      if (key == "profile") continue;
      if (key == "total_steps") c.total_steps = v.get<std::int64_t>();
      else if (key == "warmup_steps") c.warmup_steps = v.get<std::int64_t>();
      else if (key == "peak_lr") c.peak_lr = v.get<double>();
      else if (key == "weight_decay") c.weight_decay = v.get<double>();
      else if (key == "batch_size") c.batch_size = v.get<std::int64_t>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "beta1") c.beta1 = v.get<double>();
      else if (key == "beta2") c.beta2 = v.get<double>();
      else if (key == "epsilon") c.epsilon = v.get<double>();
      else if (key == "holdout_fraction") c.holdout_fraction = v.get<double>();
      else throw Error(ErrorCode::kValidation, "train config: unknown field '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kValidation, std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

nlohmann::json train_config_to_json(const TrainConfig& c) {
  return {{"total_steps", c.total_steps}, {"warmup_steps", c.warmup_steps},
          {"peak_lr", c.peak_lr},         {"weight_decay", c.weight_decay},
          {"batch_size", c.batch_size},   {"seed", c.seed},
          {"beta1", c.beta1},             {"beta2", c.beta2},
          {"epsilon", c.epsilon},         {"holdout_fraction", c.holdout_fraction}};
}

std::uint64_t config_hash(const TrainConfig& config) {
  return fnv1a(train_config_to_json(config).dump());
}

Gradient Gradient::zeros_like(const ScoringModel& model) {
  Gradient g;
  g.text_projection = Matrix(model.text_dim(), model.dim());
  g.image_projection = Matrix(model.image_dim(), model.dim());
  return g;
}

void Gradient::add(const Gradient& other) {
  auto add_to = [](std::span<double> dst, std::span<const double> src) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  };
  add_to(text_projection.values(), other.text_projection.values());
  add_to(image_projection.values(), other.image_projection.values());
  log_inv_temperature += other.log_inv_temperature;
}

void Gradient::scale(double factor) {
  for (double& v : text_projection.values()) v *= factor;
  for (double& v : image_projection.values()) v *= factor;
  log_inv_temperature *= factor;
}

OptimizerState OptimizerState::for_model(const ScoringModel& model) {
  return {Gradient::zeros_like(model), Gradient::zeros_like(model), 0};
}

double kl_preference_loss(std::array<double, 2> y, std::array<double, 2> y_hat) {
  if (std::abs(y[0] + y[1] - 1.0) > 1e-9 || std::abs(y_hat[0] + y_hat[1] - 1.0) > 1e-9) {
    throw Error(ErrorCode::kInvalidArgument, "preference distributions must sum to 1");
  }
  if (y[0] < 0.0 || y[1] < 0.0 || !(y_hat[0] > 0.0) || !(y_hat[1] > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument,
                "labels must be non-negative and predictions strictly positive");
  }
  double loss = 0.0;
  for (int j = 0; j < 2; ++j) {
    if (y[j] > 0.0) loss += y[j] * (std::log(y[j]) - std::log(y_hat[j]));
  }
  return loss;
}

double pair_loss_from_scores(double label, double score_a, double score_b) {
  const double x = score_a - score_b;
  return xlogx(label) + xlogx(1.0 - label) - label * log_logistic(x) -
         (1.0 - label) * log_logistic(-x);
}

double pair_loss(const ScoringModel& model, const PairExample& example) {
  check_example_dims(model, example);
  const Forward f = forward(model, example);
  return pair_loss_from_scores(example.label, f.score_a, f.score_b);
}

double batch_loss(const ScoringModel& model, std::span<const PairExample> batch) {
  if (batch.empty()) throw Error(ErrorCode::kInvalidArgument, "empty batch");
  double total = 0.0;
  for (const auto& ex : batch) total += pair_loss(model, ex);
  return total / static_cast<double>(batch.size());
}

Gradient loss_gradient(const ScoringModel& model, std::span<const PairExample> batch,
                       int threads) {
  if (batch.empty()) throw Error(ErrorCode::kInvalidArgument, "empty batch");
  for (const auto& ex : batch) check_example_dims(model, ex);
  const std::size_t blocks = (batch.size() + kReductionBlock - 1) / kReductionBlock;
  std::vector<Gradient> partial(blocks, Gradient::zeros_like(model));
  parallel_for(blocks, threads, [&](std::size_t b) {
    const std::size_t end = std::min(batch.size(), (b + 1) * kReductionBlock);
    for (std::size_t i = b * kReductionBlock; i < end; ++i) {
      accumulate_example(model, batch[i], partial[b]);
    }
  });
  Gradient total = std::move(partial[0]);
  for (std::size_t b = 1; b < blocks; ++b) total.add(partial[b]);
  total.scale(1.0 / static_cast<double>(batch.size()));
  return total;
}

double lr_at_step(const TrainConfig& config, std::int64_t step) {
  if (step < 0 || step >= config.total_steps) {
    throw Error(ErrorCode::kInvalidArgument,
                "step " + std::to_string(step) + " outside [0, " +
                    std::to_string(config.total_steps) + ")");
  }
  if (step < config.warmup_steps) {
    return config.peak_lr * static_cast<double>(step + 1) /
           static_cast<double>(config.warmup_steps);
  }
  const double progress = static_cast<double>(step - config.warmup_steps) /
                          static_cast<double>(config.total_steps - config.warmup_steps);
  return config.peak_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

void adamw_update(std::span<double> params, std::span<const double> grads,
                  std::span<double> first_moment, std::span<double> second_moment,
                  std::int64_t step, double lr, double weight_decay,
                  const TrainConfig& config) {
  const double bias1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
  const double bias2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
  const double decay = 1.0 - lr * weight_decay;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    params[i] *= decay;
    first_moment[i] = config.beta1 * first_moment[i] + (1.0 - config.beta1) * g;
    second_moment[i] = config.beta2 * second_moment[i] + (1.0 - config.beta2) * g * g;
    const double m_hat = first_moment[i] / bias1;
    const double v_hat = second_moment[i] / bias2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + config.epsilon);
  }
}

void adamw_step(ScoringModel& model, const Gradient& grads, OptimizerState& state, double lr,
                const TrainConfig& config) {
  ++state.step;
  adamw_update(model.text_projection.values(), grads.text_projection.values(),
               state.first_moment.text_projection.values(),
               state.second_moment.text_projection.values(), state.step, lr,
               config.weight_decay, config);
  adamw_update(model.image_projection.values(), grads.image_projection.values(),
               state.first_moment.image_projection.values(),
               state.second_moment.image_projection.values(), state.step, lr,
               config.weight_decay, config);
  adamw_update(std::span<double>(&model.log_inv_temperature, 1),
               std::span<const double>(&grads.log_inv_temperature, 1),
               std::span<double>(&state.first_moment.log_inv_temperature, 1),
               std::span<double>(&state.second_moment.log_inv_temperature, 1), state.step,
               lr, 0.0, config);
}

std::vector<PairExample> resolve_pairs(const std::vector<PairwiseComparison>& pairs,
                                       const EmbeddingSet& embeddings) {
  std::vector<PairExample> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    out.push_back({embeddings.prompt(p.prompt_id), embeddings.image(p.image_a),
                   embeddings.image(p.image_b), p.label});
  }
  return out;
}

nlohmann::json train_report_to_json(const TrainReport& report) {
  auto optional_number = [](std::optional<double> v) {
    return v ? nlohmann::json(*v) : nlohmann::json();
  };
  nlohmann::json j = {{"loss_trace", report.loss_trace},
                      {"train_accuracy", optional_number(report.train_accuracy)},
                      {"n_train_pairs", report.n_train_pairs},
                      {"n_heldout_pairs", report.n_heldout_pairs},
                      {"seed", report.seed}};
  j["heldout_accuracy"] = optional_number(report.heldout_accuracy);
  return j;
}

TrainResult train(ScoringModel model, const std::vector<PairwiseComparison>& pairs,
                  const EmbeddingSet& embeddings, const TrainConfig& config,
                  const std::vector<PairwiseComparison>& heldout,
                  const TrainOptions& options) {
  const auto started = std::chrono::steady_clock::now();
  config.validate();
  model.validate();
  if (pairs.empty()) throw Error(ErrorCode::kInvalidArgument, "no training pairs");
  if (embeddings.text_dim() != model.text_dim() || embeddings.image_dim() != model.image_dim()) {
    throw Error(ErrorCode::kInvalidArgument, "embedding dimensions do not match the model");
  }

  std::vector<PairwiseComparison> train_pairs = pairs;
  std::vector<PairwiseComparison> test_pairs = heldout;
  if (config.holdout_fraction > 0.0 && heldout.empty()) {
    auto split = split_pairs(pairs, config.seed, config.holdout_fraction);
    train_pairs = std::move(split.train);
    test_pairs = std::move(split.test);
  }
  const std::vector<PairExample> examples = resolve_pairs(train_pairs, embeddings);
  if (!test_pairs.empty()) resolve_pairs(test_pairs, embeddings);

  TrainReport report;
  report.seed = config.seed;
  report.n_train_pairs = train_pairs.size();
  report.n_heldout_pairs = test_pairs.size();
  report.loss_trace.reserve(static_cast<std::size_t>(config.total_steps));

  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(examples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::size_t cursor = order.size();  // forces a shuffle before the first batch

  OptimizerState state = OptimizerState::for_model(model);
  const auto batch_size = static_cast<std::size_t>(config.batch_size);
  std::vector<PairExample> batch;
  batch.reserve(batch_size);
  for (std::int64_t step = 0; step < config.total_steps; ++step) {
    if (cursor >= order.size()) {
      std::shuffle(order.begin(), order.end(), rng);
      cursor = 0;
    }
    const std::size_t end = std::min(order.size(), cursor + batch_size);
    batch.clear();
    for (std::size_t i = cursor; i < end; ++i) batch.push_back(examples[order[i]]);
    cursor = end;

    const double lr = lr_at_step(config, step);
    double loss = 0.0;
    try {
      loss = batch_loss(model, batch);
      if (!std::isfinite(loss)) throw Error(ErrorCode::kNumeric, "non-finite loss");
      const Gradient grad = loss_gradient(model, batch, options.threads);
      adamw_step(model, grad, state, lr, config);
      model.validate();
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kNumeric) throw;
      throw Error(ErrorCode::kNumeric,
                  "training diverged at step " + std::to_string(step) + ": " + e.what());
    }
    report.loss_trace.push_back(loss);
    if (options.on_step) options.on_step(step, loss, lr);
  }

  report.train_accuracy = pairwise_accuracy(model, train_pairs, embeddings, options.threads).accuracy;
  if (!test_pairs.empty()) {
    report.heldout_accuracy =
        pairwise_accuracy(model, test_pairs, embeddings, options.threads).accuracy;
  }
  report.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return {std::move(model), std::move(report)};
}

}  // namespace prefbench
