#include "prefbench/scorer.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <random>
#include <string>

#include "json.hpp"
#include "prefbench/embedding_store.hpp"

namespace prefbench {
namespace {

void check_dim(std::size_t got, std::size_t want, const char* what) {
  if (got != want) {
    throw Error(ErrorCode::kInvalidArgument,
                std::string(what) + " has dim " + std::to_string(got) + ", model expects " +
                    std::to_string(want));
  }
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

double ScoringModel::temperature() const { return std::exp(-log_inv_temperature); }
double ScoringModel::inv_temperature() const { return std::exp(log_inv_temperature); }

void ScoringModel::validate() const {
  if (text_projection.cols() != image_projection.cols() || dim() == 0 ||
      text_dim() == 0 || image_dim() == 0) {
    throw Error(ErrorCode::kValidation, "projection shapes are inconsistent");
  }
  if (!text_projection.all_finite() || !image_projection.all_finite() ||
      !std::isfinite(log_inv_temperature)) {
    throw Error(ErrorCode::kNumeric, "model parameters are not finite");
  }
}

double default_log_inv_temperature() { return std::log(100.0); }

ScoringModel init_model(std::size_t dim_t, std::size_t dim_i, std::optional<std::size_t> d,
                        std::uint64_t seed, double noise) {
  const std::size_t shared = d.value_or(std::min(dim_t, dim_i));
  if (dim_t == 0 || dim_i == 0 || shared == 0) {
    throw Error(ErrorCode::kInvalidArgument, "model dimensions must be positive");
  }
  ScoringModel model;
  model.text_projection = Matrix(dim_t, shared);
  model.image_projection = Matrix(dim_i, shared);
  model.log_inv_temperature = default_log_inv_temperature();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> jitter(-noise, noise);
  for (Matrix* m : {&model.text_projection, &model.image_projection}) {
    for (std::size_t r = 0; r < m->rows(); ++r) {
      for (std::size_t c = 0; c < m->cols(); ++c) {
        (*m)(r, c) = (r == c ? 1.0 : 0.0) + jitter(rng);
      }
    }
  }
  return model;
}

double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double log_logistic(double x) {
  if (x >= 0.0) return -std::log1p(std::exp(-x));
  return x - std::log1p(std::exp(x));
}

std::vector<double> project(const Matrix& projection, std::span<const double> x) {
  check_dim(x.size(), projection.rows(), "embedding");
  std::vector<double> out(projection.cols(), 0.0);
  for (std::size_t r = 0; r < projection.rows(); ++r) {
    const double xr = x[r];
    auto row = projection.row(r);
    for (std::size_t c = 0; c < out.size(); ++c) out[c] += xr * row[c];
  }
  return out;
}

double raw_similarity(const ScoringModel& model, std::span<const double> prompt_emb,
                      std::span<const double> image_emb) {
  check_dim(prompt_emb.size(), model.text_dim(), "prompt embedding");
  check_dim(image_emb.size(), model.image_dim(), "image embedding");
  const auto u = l2_normalize(project(model.text_projection, prompt_emb));
  const auto v = l2_normalize(project(model.image_projection, image_emb));
  return dot(u, v);
}

double score(const ScoringModel& model, std::span<const double> prompt_emb,
             std::span<const double> image_emb) {
  return raw_similarity(model, prompt_emb, image_emb) / model.temperature();
}

PairPrediction predict_from_scores(double score_a, double score_b) {
  PairPrediction p;
  p.score_a = score_a;
  p.score_b = score_b;
  p.prob_a = logistic(score_a - score_b);
  p.prob_b = logistic(score_b - score_a);
  return p;
}

PairPrediction predict_pair(const ScoringModel& model, std::span<const double> prompt_emb,
                            std::span<const double> emb_a, std::span<const double> emb_b) {
  return predict_from_scores(score(model, prompt_emb, emb_a), score(model, prompt_emb, emb_b));
}

std::vector<std::uint8_t> encode_checkpoint(const ScoringModel& model) {
  model.validate();
  const nlohmann::json header = {{"dim_t", model.text_dim()},
                                 {"dim_i", model.image_dim()},
                                 {"d", model.dim()},
                                 {"log_inv_temperature", model.log_inv_temperature},
                                 {"format_version", kCheckpointFormatVersion}};
  const std::string text = header.dump();
  std::vector<std::uint8_t> out(std::begin(kCheckpointMagic), std::end(kCheckpointMagic));
  const auto len = static_cast<std::uint32_t>(text.size());
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(len >> (8 * i)));
  out.insert(out.end(), text.begin(), text.end());
  for (const Matrix* m : {&model.text_projection, &model.image_projection}) {
    for (double v : m->values()) {
      const auto bits = std::bit_cast<std::uint64_t>(v);
      for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
    }
  }
  return out;
}

ScoringModel decode_checkpoint(std::span<const std::uint8_t> bytes) {
  auto fail = [](const std::string& what) -> ScoringModel {
    throw Error(ErrorCode::kFormat, "checkpoint: " + what);
  };
  if (bytes.size() < 8) return fail("truncated header");
  if (std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) return fail("bad magic");
  std::uint32_t len = 0;
  for (int i = 0; i < 4; ++i) len |= std::uint32_t{bytes[4 + i]} << (8 * i);
  if (bytes.size() - 8 < len) return fail("truncated header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + 8, bytes.begin() + 8 + len);
  } catch (const nlohmann::json::exception& e) {
    return fail(std::string("malformed header: ") + e.what());
  }
  ScoringModel model;
  std::size_t dim_t = 0, dim_i = 0, d = 0;
  try {
    if (header.at("format_version").get<std::uint32_t>() != kCheckpointFormatVersion) {
      return fail("unsupported format_version");
    }
    dim_t = header.at("dim_t").get<std::size_t>();
    dim_i = header.at("dim_i").get<std::size_t>();
    d = header.at("d").get<std::size_t>();
    model.log_inv_temperature = header.at("log_inv_temperature").get<double>();
  } catch (const nlohmann::json::exception& e) {
    return fail(std::string("bad header field: ") + e.what());
  }
  if (dim_t == 0 || dim_i == 0 || d == 0) return fail("zero dimension");
  const std::size_t payload = bytes.size() - 8 - len;
  if (payload / 8 / d < dim_t + dim_i || payload != (dim_t + dim_i) * d * 8) {
    return fail("payload size does not match header dimensions");
  }
  model.text_projection = Matrix(dim_t, d);
  model.image_projection = Matrix(dim_i, d);
  std::size_t pos = 8 + len;
  for (Matrix* m : {&model.text_projection, &model.image_projection}) {
    for (double& v : m->values()) {
      std::uint64_t bits = 0;
      for (int i = 0; i < 8; ++i) bits |= std::uint64_t{bytes[pos + i]} << (8 * i);
      v = std::bit_cast<double>(bits);
      pos += 8;
    }
  }
  model.validate();
  return model;
}

void save_checkpoint(const ScoringModel& model, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kIo, "write failed for '" + path.string() + "'");
}

ScoringModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace prefbench
