// Independent reference computations shared by the unit and acceptance tests.
#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <random>
#include <vector>

#include "prefbench/embedding_store.hpp"
#include "prefbench/scorer.hpp"
#include "prefbench/trainer.hpp"
#include "test_support.hpp"

namespace prefbench::test_util {

// Denominator floor for relative error: gradients smaller than this are
// compared in absolute terms to 1e-10.
inline constexpr double kGradientRelFloor = 1e-6;

inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) /
         std::max({std::abs(analytic), std::abs(numeric), kGradientRelFloor});
}

struct GradientCase {
  ScoringModel model;
  std::vector<std::vector<double>> storage;
  std::vector<PairExample> batch;
};

// Random model with dims <= 16 and a batch of <= 8 examples with random
// soft labels. Embeddings live in `storage`.
inline GradientCase random_gradient_case(std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> dim(1, 16), batch_size(1, 8);
  std::uniform_real_distribution<double> unit(0.0, 1.0), lit(0.0, 3.0);
  std::normal_distribution<double> normal;
  GradientCase c;
  const std::size_t dt = dim(rng), di = dim(rng), d = dim(rng);
  c.model.text_projection = Matrix(dt, d);
  c.model.image_projection = Matrix(di, d);
  for (double& v : c.model.text_projection.values()) v = normal(rng);
  for (double& v : c.model.image_projection.values()) v = normal(rng);
  c.model.log_inv_temperature = lit(rng);
  const std::size_t n = batch_size(rng);
  c.storage.reserve(3 * n);
  for (std::size_t i = 0; i < n; ++i) {
    c.storage.push_back(random_unit(rng, dt));
    c.storage.push_back(random_unit(rng, di));
    c.storage.push_back(random_unit(rng, di));
  }
  for (std::size_t i = 0; i < n; ++i) {
    c.batch.push_back({c.storage[3 * i], c.storage[3 * i + 1], c.storage[3 * i + 2], unit(rng)});
  }
  return c;
}

// Largest relative error between loss_gradient and a fourth-order central
// difference with step h over every parameter.
inline double max_gradient_error(const GradientCase& c, double h = 3e-4) {
  const Gradient g = loss_gradient(c.model, c.batch);
  ScoringModel m = c.model;
  auto numeric = [&](double& param) {
    const double saved = param;
    auto at = [&](double offset) {
      param = saved + offset;
      return batch_loss(m, c.batch);
    };
    const double d = (at(-2 * h) - 8 * at(-h) + 8 * at(h) - at(2 * h)) / (12 * h);
    param = saved;
    return d;
  };
  double worst = 0.0;
  auto tv = m.text_projection.values();
  for (std::size_t i = 0; i < tv.size(); ++i) {
    worst = std::max(worst, relative_error(g.text_projection.values()[i], numeric(tv[i])));
  }
  auto iv = m.image_projection.values();
  for (std::size_t i = 0; i < iv.size(); ++i) {
    worst = std::max(worst, relative_error(g.image_projection.values()[i], numeric(iv[i])));
  }
  worst = std::max(worst, relative_error(g.log_inv_temperature, numeric(m.log_inv_temperature)));
  return worst;
}

// Finite-population theory for the std of the mean of n draws without
// replacement from N values with population variance sigma2 (divisor N).
inline double finite_population_std(double sigma2, std::size_t n, std::size_t N) {
  return std::sqrt(sigma2 / static_cast<double>(n) * static_cast<double>(N - n) /
                   static_cast<double>(N - 1));
}

// Two-pass sample standard deviation in long double.
inline double two_pass_sample_std(const std::vector<double>& x) {
  long double m = 0;
  for (double v : x) m += v;
  m /= static_cast<long double>(x.size());
  long double ss = 0;
  for (double v : x) ss += (v - m) * (v - m);
  return static_cast<double>(std::sqrt(ss / static_cast<long double>(x.size() - 1)));
}

// Error-kind keys used by the corrupt-fixture manifest.
inline EmbeddingFormatErrorKind kind_from_key(const std::string& key) {
  static const std::map<std::string, EmbeddingFormatErrorKind> kinds = {
      {"bad_magic", EmbeddingFormatErrorKind::kBadMagic},
      {"unsupported_version", EmbeddingFormatErrorKind::kUnsupportedVersion},
      {"bad_dimension", EmbeddingFormatErrorKind::kBadDimension},
      {"truncated", EmbeddingFormatErrorKind::kTruncated},
      {"empty_id", EmbeddingFormatErrorKind::kEmptyId},
      {"duplicate_id", EmbeddingFormatErrorKind::kDuplicateId},
      {"non_finite", EmbeddingFormatErrorKind::kNonFinite},
      {"zero_vector", EmbeddingFormatErrorKind::kZeroVector},
      {"trailing_bytes", EmbeddingFormatErrorKind::kTrailingBytes}};
  return kinds.at(key);
}


}  // namespace prefbench::test_util
