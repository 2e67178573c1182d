#include "prefbench/synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "prefbench/benchmark.hpp"

namespace prefbench {
namespace {

std::string prompt_id(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "p%06zu", i);
  return buf;
}

void fill_unit_rows(Matrix& m, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    double norm = 0.0;
    do {
      norm = 0.0;
      for (double& x : row) {
        x = normal(rng);
        norm += x * x;
      }
    } while (norm == 0.0);
    norm = std::sqrt(norm);
    for (double& x : row) x /= norm;
  }
}

// Orthonormal columns via modified Gram-Schmidt on a Gaussian matrix.
Matrix orthonormal_columns(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix q(rows, cols);
  for (double& x : q.values()) x = normal(rng);
  for (std::size_t c = 0; c < cols; ++c) {
    for (std::size_t p = 0; p < c; ++p) {
      double proj = 0.0;
      for (std::size_t r = 0; r < rows; ++r) proj += q(r, c) * q(r, p);
      for (std::size_t r = 0; r < rows; ++r) q(r, c) -= proj * q(r, p);
    }
    double norm = 0.0;
    for (std::size_t r = 0; r < rows; ++r) norm += q(r, c) * q(r, c);
    norm = std::sqrt(norm);
    for (std::size_t r = 0; r < rows; ++r) q(r, c) /= norm;
  }
  return q;
}

std::shared_ptr<EmbeddingMatrix> to_float_matrix(const Matrix& values,
                                                 const std::vector<std::string>& ids,
                                                 std::size_t dim) {
  auto m = std::make_shared<EmbeddingMatrix>(dim);
  std::vector<float> row(dim);
  for (std::size_t r = 0; r < values.rows(); ++r) {
    for (std::size_t c = 0; c < dim; ++c) row[c] = static_cast<float>(values(r, c));
    m->add(ids[r], row);
  }
  return m;
}

std::vector<double> planted_scores(const PlantedWorld& world, std::size_t prompt) {
  const auto text = world.embeddings->prompt(world.prompts[prompt].prompt_id);
  std::vector<double> out;
  for (const auto& id : world.image_ids[prompt]) {
    out.push_back(score(world.planted, text, world.embeddings->image(id)));
  }
  return out;
}

}  // namespace

std::string PlantedWorld::source_of_slot(std::size_t slot) {
  return "model_" + std::to_string(slot);
}

std::map<std::string, std::string> PlantedWorld::image_sources() const {
  std::map<std::string, std::string> out;
  for (const auto& ids : image_ids) {
    for (std::size_t i = 0; i < ids.size(); ++i) out.emplace(ids[i], source_of_slot(i));
  }
  return out;
}

PlantedWorld generate_world(const WorldConfig& config) {
  if (config.dim_t < 2 || config.dim_i < 2 || config.d < 1 || config.d > config.dim_t ||
      config.d > config.dim_i) {
    throw Error(ErrorCode::kInvalidArgument,
                "world dims must satisfy dim_t, dim_i >= 2 and 1 <= d <= min(dim_t, dim_i)");
  }
  if (config.images_per_prompt < 1) {
    throw Error(ErrorCode::kInvalidArgument, "images_per_prompt must be >= 1");
  }
  if (!(config.planted_inv_temperature > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "planted_inv_temperature must be positive");
  }
  std::mt19937_64 rng(config.seed);
  PlantedWorld world;
  world.config = config;
  world.planted.text_projection = orthonormal_columns(config.dim_t, config.d, rng);
  world.planted.image_projection = orthonormal_columns(config.dim_i, config.d, rng);
  world.planted.log_inv_temperature = std::log(config.planted_inv_temperature);

  world.prompt_embeddings = Matrix(config.n_prompts, config.dim_t);
  world.image_embeddings = Matrix(config.n_prompts * config.images_per_prompt, config.dim_i);
  fill_unit_rows(world.prompt_embeddings, rng);
  fill_unit_rows(world.image_embeddings, rng);

  std::vector<std::string> prompt_ids, flat_image_ids;
  for (std::size_t p = 0; p < config.n_prompts; ++p) {
    PromptRecord rec;
    rec.prompt_id = prompt_id(p);
    rec.text = "synthetic prompt " + std::to_string(p);
    rec.style = kAllStyles[p % 4];
    prompt_ids.push_back(rec.prompt_id);
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < config.images_per_prompt; ++i) {
      ids.push_back(rec.prompt_id + "_i" + std::to_string(i));
      flat_image_ids.push_back(ids.back());
    }
    world.prompts.push_back(std::move(rec));
    world.image_ids.push_back(std::move(ids));
  }
  world.embeddings = std::make_shared<EmbeddingSet>(
      to_float_matrix(world.prompt_embeddings, prompt_ids, config.dim_t),
      to_float_matrix(world.image_embeddings, flat_image_ids, config.dim_i));
  return world;
}

LabelMode parse_label_mode(const std::string& text) {
  if (text == "hard_argmax" || text == "hard") return LabelMode::kHardArgmax;
  if (text == "sampled") return LabelMode::kSampled;
  throw Error(ErrorCode::kValidation, "unknown label mode '" + text + "'");
}

std::vector<PairwiseComparison> label_pairs(const PlantedWorld& world, std::size_t pairs_per_prompt,
                                            LabelMode mode, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<PairwiseComparison> out;
  for (std::size_t p = 0; p < world.prompts.size(); ++p) {
    const auto& ids = world.image_ids[p];
    const auto scores = planted_scores(world, p);
    std::vector<std::pair<std::size_t, std::size_t>> candidates;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      for (std::size_t j = i + 1; j < ids.size(); ++j) candidates.emplace_back(i, j);
    }
    std::shuffle(candidates.begin(), candidates.end(), rng);
    candidates.resize(std::min(candidates.size(), pairs_per_prompt));
    for (auto [i, j] : candidates) {
      if (ids[j] < ids[i]) std::swap(i, j);
      const double prob_a = predict_from_scores(scores[i], scores[j]).prob_a;
      PairwiseComparison pair;
      pair.prompt_id = world.prompts[p].prompt_id;
      pair.image_a = ids[i];
      pair.image_b = ids[j];
      pair.n_annotators = 1;
      if (mode == LabelMode::kHardArgmax) {
        pair.label = scores[i] >= scores[j] ? 1.0 : 0.0;
      } else {
        pair.label = unit(rng) < prob_a ? 1.0 : 0.0;
      }
      out.push_back(std::move(pair));
    }
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return std::tie(a.prompt_id, a.image_a, a.image_b) < std::tie(b.prompt_id, b.image_a, b.image_b);
  });
  return out;
}

std::vector<double> planted_probabilities(const PlantedWorld& world,
                                          const std::vector<PairwiseComparison>& pairs) {
  std::vector<double> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    out.push_back(predict_pair(world.planted, world.embeddings->prompt(p.prompt_id),
                               world.embeddings->image(p.image_a),
                               world.embeddings->image(p.image_b))
                      .prob_a);
  }
  return out;
}

double bayes_accuracy(const PlantedWorld& world, const std::vector<PairwiseComparison>& pairs) {
  if (pairs.empty()) throw Error(ErrorCode::kInvalidArgument, "no pairs");
  double total = 0.0;
  for (double p : planted_probabilities(world, pairs)) total += std::max(p, 1.0 - p);
  return total / static_cast<double>(pairs.size());
}

std::vector<Group> sample_rankings(const PlantedWorld& world, std::size_t n_annotators,
                                   LabelMode mode, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Group> groups;
  groups.reserve(world.prompts.size());
  for (std::size_t p = 0; p < world.prompts.size(); ++p) {
    Group g;
    g.prompt_id = world.prompts[p].prompt_id;
    g.image_ids = world.image_ids[p];
    const auto scores = planted_scores(world, p);
    for (std::size_t a = 0; a < n_annotators; ++a) {
      RankingAnnotation ann;
      ann.annotator_id = "annotator_" + std::to_string(a);
      std::vector<std::size_t> left(g.image_ids.size());
      for (std::size_t i = 0; i < left.size(); ++i) left[i] = i;
      if (mode == LabelMode::kHardArgmax) {
        std::stable_sort(left.begin(), left.end(),
                         [&](std::size_t x, std::size_t y) { return scores[x] > scores[y]; });
        for (auto i : left) ann.ranking.push_back(g.image_ids[i]);
      } else {
        // Sequential softmax draws (Plackett-Luce).
        while (!left.empty()) {
          double top = -INFINITY;
          for (auto i : left) top = std::max(top, scores[i]);
          double total = 0.0;
          std::vector<double> w;
          for (auto i : left) {
            w.push_back(std::exp(scores[i] - top));
            total += w.back();
          }
          double u = unit(rng) * total;
          std::size_t pick = left.size() - 1;
          for (std::size_t k = 0; k < left.size(); ++k) {
            if (u < w[k]) {
              pick = k;
              break;
            }
            u -= w[k];
          }
          ann.ranking.push_back(g.image_ids[left[pick]]);
          left.erase(left.begin() + static_cast<std::ptrdiff_t>(pick));
        }
      }
      g.annotations.push_back(std::move(ann));
    }
    groups.push_back(std::move(g));
  }
  return groups;
}

WorldConfig parse_world_config(const nlohmann::json& doc, const WorldConfig& base) {
  WorldConfig c = base;
  try {
    if (doc.contains("dim_t")) c.dim_t = doc["dim_t"].get<std::size_t>();
    if (doc.contains("dim_i")) c.dim_i = doc["dim_i"].get<std::size_t>();
    if (doc.contains("d")) c.d = doc["d"].get<std::size_t>();
    if (doc.contains("n_prompts")) c.n_prompts = doc["n_prompts"].get<std::size_t>();
    if (doc.contains("images_per_prompt")) {
      c.images_per_prompt = doc["images_per_prompt"].get<std::size_t>();
    }
    if (doc.contains("planted_inv_temperature")) {
      c.planted_inv_temperature = doc["planted_inv_temperature"].get<double>();
    }
    if (doc.contains("seed")) c.seed = doc["seed"].get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kValidation, std::string("synth config: ") + e.what());
  }
  return c;
}

FixtureOptions parse_fixture_options(const nlohmann::json& doc, const FixtureOptions& base) {
  FixtureOptions o = base;
  try {
    if (doc.contains("pairs_per_prompt")) o.pairs_per_prompt = doc["pairs_per_prompt"].get<std::size_t>();
    if (doc.contains("label_mode")) o.label_mode = parse_label_mode(doc["label_mode"].get<std::string>());
    if (doc.contains("n_annotators")) o.n_annotators = doc["n_annotators"].get<std::size_t>();
    if (doc.contains("chunk_size")) o.chunk_size = doc["chunk_size"].get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kValidation, std::string("synth config: ") + e.what());
  }
  if (o.chunk_size == 0) throw Error(ErrorCode::kValidation, "synth config: chunk_size must be positive");
  return o;
}

nlohmann::json write_fixture(const PlantedWorld& world, const FixtureOptions& options,
                             const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create '" + dir.string() + "': " + ec.message());
  const std::uint64_t seed = world.config.seed;

  write_embeddings(world.embeddings->text(), dir / "text.pev");
  write_embeddings(world.embeddings->image(), dir / "image.pev");
  const bool combined = world.config.dim_t == world.config.dim_i;
  if (combined) {
    EmbeddingMatrix all(world.config.dim_t);
    for (const auto* m : {&world.embeddings->text(), &world.embeddings->image()}) {
      for (std::size_t r = 0; r < m->size(); ++r) all.add(m->id(r), m->row(r));
    }
    write_embeddings(all, dir / "embeddings.pev");
  }

  Dataset dataset;
  dataset.prompts = world.prompts;
  dataset.groups = sample_rankings(world, options.n_annotators, options.label_mode, seed + 1);
  write_dataset(dataset, dir / "dataset.json");

  const auto pairs = label_pairs(world, options.pairs_per_prompt, options.label_mode, seed + 2);
  write_pairs(pairs, dir / "pairs.json");
  save_checkpoint(world.planted, dir / "planted.ckpt");

  nlohmann::json sources = nlohmann::json::object();
  for (const auto& [image, source] : world.image_sources()) sources[image] = source;
  write_text_file(dir / "sources.json", nlohmann::json{{"sources", sources}}.dump(2) + "\n");

  nlohmann::json benchmarks = nlohmann::json::array();
  for (std::size_t slot = 0; slot < world.config.images_per_prompt; ++slot) {
    BenchmarkInput input;
    input.model_id = PlantedWorld::source_of_slot(slot);
    input.chunk_size = options.chunk_size;
    for (std::size_t p = 0; p < world.prompts.size(); ++p) {
      input.styles[world.prompts[p].style].push_back(
          {world.prompts[p].prompt_id, {world.image_ids[p][slot]}});
    }
    for (auto it = input.styles.begin(); it != input.styles.end();) {
      auto& prompts = it->second;
      prompts.resize(prompts.size() - prompts.size() % options.chunk_size);
      it = prompts.empty() ? input.styles.erase(it) : std::next(it);
    }
    std::vector<BenchmarkPrompt> flat;
    for (std::size_t p = 0; p < world.prompts.size(); ++p) {
      flat.push_back({world.prompts[p].prompt_id, {world.image_ids[p][slot]}});
    }
    if (!flat.empty()) input.flat_lists["all"] = flat;
    const std::string name = "benchmark_" + input.model_id + ".json";
    write_text_file(dir / name, benchmark_input_to_json(input).dump() + "\n");
    benchmarks.push_back(name);
  }

  return {{"seed", seed},
          {"n_prompts", world.prompts.size()},
          {"n_images", world.n_images()},
          {"n_pairs", pairs.size()},
          {"n_groups", dataset.groups.size()},
          {"combined_embeddings", combined},
          {"benchmarks", benchmarks}};
}

}  // namespace prefbench
