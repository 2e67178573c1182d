#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "prefbench/benchmark.hpp"
#include "prefbench/evaluator.hpp"
#include "prefbench/synth.hpp"
#include "test_support.hpp"

namespace prefbench {
namespace {

WorldConfig small_config(std::uint64_t seed = 3) {
  WorldConfig c;
  c.dim_t = 12;
  c.dim_i = 10;
  c.d = 6;
  c.n_prompts = 40;
  c.images_per_prompt = 4;
  c.seed = seed;
  return c;
}

TEST(World, RowsAreUnitNormInBothPrecisions) {
  const auto w = generate_world(small_config());
  auto check = [](const Matrix& m) {
    for (std::size_t r = 0; r < m.rows(); ++r) {
      double n = 0.0;
      for (double x : m.row(r)) n += x * x;
      EXPECT_NEAR(std::sqrt(n), 1.0, 1e-12);
    }
  };
  check(w.prompt_embeddings);
  check(w.image_embeddings);
  for (std::size_t r = 0; r < w.embeddings->image().size(); ++r) {
    double n = 0.0;
    for (float x : w.embeddings->image().row(r)) n += double(x) * x;
    EXPECT_NEAR(std::sqrt(n), 1.0, 1e-6);
  }
}

TEST(World, PlantedProjectionsHaveOrthonormalColumns) {
  const auto w = generate_world(small_config());
  for (const Matrix* m : {&w.planted.text_projection, &w.planted.image_projection}) {
    for (std::size_t a = 0; a < m->cols(); ++a) {
      for (std::size_t b = 0; b < m->cols(); ++b) {
        double dot = 0.0;
        for (std::size_t r = 0; r < m->rows(); ++r) dot += (*m)(r, a) * (*m)(r, b);
        EXPECT_NEAR(dot, a == b ? 1.0 : 0.0, 1e-12);
      }
    }
  }
  EXPECT_NEAR(w.planted.inv_temperature(), 20.0, 1e-12);
}

TEST(World, DeterministicPerSeed) {
  const auto a = generate_world(small_config(5));
  const auto b = generate_world(small_config(5));
  const auto c = generate_world(small_config(6));
  EXPECT_EQ(a.planted, b.planted);
  EXPECT_EQ(a.image_embeddings.values()[0], b.image_embeddings.values()[0]);
  EXPECT_TRUE(a.embeddings->image() == b.embeddings->image());
  EXPECT_FALSE(a.planted == c.planted);
}

TEST(World, IdsAndStyles) {
  const auto w = generate_world(small_config());
  ASSERT_EQ(w.prompts.size(), 40u);
  EXPECT_EQ(w.prompts[0].prompt_id, "p000000");
  EXPECT_EQ(w.image_ids[1][2], "p000001_i2");
  std::set<StyleCategory> styles;
  for (const auto& p : w.prompts) styles.insert(p.style);
  EXPECT_EQ(styles.size(), 4u);
  EXPECT_EQ(w.image_sources().at("p000007_i3"), "model_3");
}

TEST(World, RejectsBadConfig) {
  auto c = small_config();
  c.d = 11;
  EXPECT_THROW(generate_world(c), Error);
  c = small_config();
  c.images_per_prompt = 0;
  EXPECT_THROW(generate_world(c), Error);
  c = small_config();
  c.planted_inv_temperature = 0.0;
  EXPECT_THROW(generate_world(c), Error);
}

TEST(World, ZeroPromptsGiveEmptyWorld) {
  auto c = small_config();
  c.n_prompts = 0;
  const auto w = generate_world(c);
  EXPECT_TRUE(w.prompts.empty());
  EXPECT_EQ(w.n_images(), 0u);
  EXPECT_TRUE(label_pairs(w, 5, LabelMode::kSampled, 1).empty());
}

TEST(World, SingleImagePromptsHaveNoPairs) {
  auto c = small_config();
  c.images_per_prompt = 1;
  EXPECT_TRUE(label_pairs(generate_world(c), 5, LabelMode::kHardArgmax, 1).empty());
}

TEST(Labels, HardLabelsFollowPlantedScores) {
  const auto w = generate_world(small_config());
  const auto pairs = label_pairs(w, 6, LabelMode::kHardArgmax, 1);
  EXPECT_EQ(pairs.size(), 40u * 6u);
  const auto probs = planted_probabilities(w, pairs);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    EXPECT_LT(pairs[i].image_a, pairs[i].image_b);
    EXPECT_EQ(pairs[i].label, probs[i] >= 0.5 ? 1.0 : 0.0);
  }
}

TEST(Labels, SampledLabelsMatchPlantedProbabilities) {
  auto c = small_config();
  c.n_prompts = 2000;
  const auto w = generate_world(c);
  const auto pairs = label_pairs(w, 3, LabelMode::kSampled, 9);
  const auto probs = planted_probabilities(w, pairs);
  double expected = 0.0, observed = 0.0, var = 0.0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    expected += probs[i];
    observed += pairs[i].label;
    var += probs[i] * (1.0 - probs[i]);
  }
  EXPECT_LT(std::abs(observed - expected), 4.0 * std::sqrt(var));
}

TEST(Labels, PlantedModelScoresPerfectlyOnHardLabels) {
  const auto w = generate_world(small_config());
  const auto pairs = label_pairs(w, 6, LabelMode::kHardArgmax, 5);
  EXPECT_EQ(pairwise_accuracy(w.planted, pairs, *w.embeddings).accuracy, 1.0);
}

TEST(Labels, EvenOddsGiveBalancedLabels) {
  auto c = small_config();
  c.n_prompts = 1500;
  c.planted_inv_temperature = 1e-12;
  const auto w = generate_world(c);
  const auto pairs = label_pairs(w, 2, LabelMode::kSampled, 6);
  double ones = 0.0;
  for (const auto& p : pairs) ones += p.label;
  const double n = static_cast<double>(pairs.size());
  EXPECT_LT(std::abs(ones / n - 0.5), 3.0 * std::sqrt(0.25 / n));
}

TEST(Labels, PlantedAccuracyOnSampledLabelsMatchesBayes) {
  auto c = small_config();
  c.n_prompts = 1500;
  c.planted_inv_temperature = 5.0;
  const auto w = generate_world(c);
  const auto pairs = label_pairs(w, 3, LabelMode::kSampled, 12);
  const auto probs = planted_probabilities(w, pairs);
  double var = 0.0;
  for (double p : probs) var += p * (1.0 - p);
  const double n = static_cast<double>(pairs.size());
  const double acc = *pairwise_accuracy(w.planted, pairs, *w.embeddings).accuracy;
  EXPECT_LT(std::abs(acc - bayes_accuracy(w, pairs)), 3.0 * std::sqrt(var) / n);
}

TEST(Labels, SortedAndDeterministic) {
  const auto w = generate_world(small_config());
  const auto a = label_pairs(w, 3, LabelMode::kSampled, 4);
  EXPECT_EQ(a, label_pairs(w, 3, LabelMode::kSampled, 4));
  EXPECT_TRUE(std::is_sorted(a.begin(), a.end(), [](const auto& x, const auto& y) {
    return std::tie(x.prompt_id, x.image_a, x.image_b) < std::tie(y.prompt_id, y.image_a, y.image_b);
  }));
  // Four images allow at most six distinct pairs.
  EXPECT_EQ(label_pairs(w, 100, LabelMode::kSampled, 4).size(), 40u * 6u);
}

TEST(Labels, BayesAccuracyIsMeanOfMaxProbability) {
  const auto w = generate_world(small_config());
  const auto pairs = label_pairs(w, 2, LabelMode::kSampled, 2);
  double total = 0.0;
  for (double p : planted_probabilities(w, pairs)) total += std::max(p, 1.0 - p);
  const double bayes = bayes_accuracy(w, pairs);
  EXPECT_NEAR(bayes, total / pairs.size(), 1e-15);
  EXPECT_GE(bayes, 0.5);
  EXPECT_LE(bayes, 1.0);
  EXPECT_THROW(bayes_accuracy(w, {}), Error);
}

TEST(Labels, ParseLabelMode) {
  EXPECT_EQ(parse_label_mode("sampled"), LabelMode::kSampled);
  EXPECT_EQ(parse_label_mode("hard_argmax"), LabelMode::kHardArgmax);
  EXPECT_THROW(parse_label_mode("soft"), Error);
}

TEST(Rankings, HardRankingsAreSortedByPlantedScore) {
  const auto w = generate_world(small_config());
  const auto groups = sample_rankings(w, 2, LabelMode::kHardArgmax, 1);
  ASSERT_EQ(groups.size(), 40u);
  for (const auto& g : groups) {
    ASSERT_EQ(g.annotations.size(), 2u);
    EXPECT_EQ(g.annotations[0].ranking, g.annotations[1].ranking);
    const auto text = w.embeddings->prompt(g.prompt_id);
    const auto& r = g.annotations[0].ranking;
    for (std::size_t i = 1; i < r.size(); ++i) {
      EXPECT_GE(score(w.planted, text, w.embeddings->image(r[i - 1])),
                score(w.planted, text, w.embeddings->image(r[i])));
    }
  }
}

TEST(Rankings, SampledRankingsArePermutations) {
  const auto w = generate_world(small_config());
  for (const auto& g : sample_rankings(w, 3, LabelMode::kSampled, 8)) {
    for (const auto& a : g.annotations) {
      std::multiset<std::string> got(a.ranking.begin(), a.ranking.end());
      std::multiset<std::string> want(g.image_ids.begin(), g.image_ids.end());
      EXPECT_EQ(got, want);
    }
  }
}

TEST(Config, ParsesKnownKeys) {
  const auto c = parse_world_config(nlohmann::json::parse(
      R"({"dim_t": 8, "dim_i": 6, "d": 3, "n_prompts": 9, "images_per_prompt": 5,
          "planted_inv_temperature": 4.5, "seed": 11})"));
  EXPECT_EQ(c.dim_t, 8u);
  EXPECT_EQ(c.dim_i, 6u);
  EXPECT_EQ(c.d, 3u);
  EXPECT_EQ(c.n_prompts, 9u);
  EXPECT_EQ(c.images_per_prompt, 5u);
  EXPECT_EQ(c.planted_inv_temperature, 4.5);
  EXPECT_EQ(c.seed, 11u);
  const auto o = parse_fixture_options(nlohmann::json::parse(
      R"({"pairs_per_prompt": 2, "label_mode": "hard_argmax", "n_annotators": 3, "chunk_size": 4})"));
  EXPECT_EQ(o.pairs_per_prompt, 2u);
  EXPECT_EQ(o.label_mode, LabelMode::kHardArgmax);
  EXPECT_EQ(o.n_annotators, 3u);
  EXPECT_EQ(o.chunk_size, 4u);
  EXPECT_THROW(parse_world_config(nlohmann::json::parse(R"({"dim_t": "x"})")), Error);
  EXPECT_THROW(parse_fixture_options(nlohmann::json::parse(R"({"chunk_size": 0})")), Error);
}

TEST(Fixture, WritesLoadableFiles) {
  test_util::TempDir dir;
  auto c = small_config();
  c.dim_i = 12;
  const auto w = generate_world(c);
  FixtureOptions o;
  o.chunk_size = 5;
  o.n_annotators = 2;
  const auto summary = write_fixture(w, o, dir.path());
  EXPECT_EQ(summary["n_prompts"], 40);
  EXPECT_EQ(summary["combined_embeddings"], true);

  const auto text = read_embeddings(dir / "text.pev");
  const auto image = read_embeddings(dir / "image.pev");
  const auto all = read_embeddings(dir / "embeddings.pev");
  EXPECT_TRUE(text == w.embeddings->text());
  EXPECT_TRUE(image == w.embeddings->image());
  EXPECT_EQ(all.size(), text.size() + image.size());

  const auto ds = load_dataset(dir / "dataset.json");
  EXPECT_EQ(ds.groups.size(), 40u);
  EXPECT_EQ(ds.groups[0].annotations.size(), 2u);
  const auto pairs = load_pairs(dir / "pairs.json");
  EXPECT_EQ(pairs.size(), summary["n_pairs"].get<std::size_t>());
  EXPECT_EQ(load_checkpoint(dir / "planted.ckpt"), w.planted);
  EXPECT_EQ(load_image_sources(dir / "sources.json").size(), w.n_images());

  for (std::size_t slot = 0; slot < 4; ++slot) {
    const auto in = load_benchmark_input(dir / ("benchmark_model_" + std::to_string(slot) + ".json"), 5);
    EXPECT_EQ(in.model_id, "model_" + std::to_string(slot));
    EXPECT_EQ(in.styles.size(), 4u);
    EXPECT_EQ(in.flat_lists.at("all").size(), 40u);
    // Every image resolves.
    EXPECT_NO_THROW(benchmark_model(w.planted, in, *w.embeddings));
  }
}

TEST(Fixture, NoCombinedFileWhenDimsDiffer) {
  test_util::TempDir dir;
  const auto summary = write_fixture(generate_world(small_config()), FixtureOptions{}, dir.path());
  EXPECT_EQ(summary["combined_embeddings"], false);
  EXPECT_FALSE(std::filesystem::exists(dir / "embeddings.pev"));
}

TEST(Fixture, ByteIdenticalForSameSeed) {
  test_util::TempDir a, b;
  write_fixture(generate_world(small_config(21)), FixtureOptions{}, a.path());
  write_fixture(generate_world(small_config(21)), FixtureOptions{}, b.path());
  for (const auto& entry : std::filesystem::directory_iterator(a.path())) {
    const auto name = entry.path().filename().string();
    EXPECT_EQ(test_util::read_bytes(entry.path()), test_util::read_bytes(b / name)) << name;
  }
}

}  // namespace
}  // namespace prefbench
