#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "prefbench/evaluator.hpp"
#include "prefbench/synth.hpp"

using namespace prefbench;

namespace {

PairwiseComparison pair(const std::string& prompt, double label, std::uint32_t n = 1) {
  return {prompt, "a", "b", label, n};
}

double binomial_pmf(int n, int k, double p) {
  return std::exp(std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0) +
                  k * std::log(p) + (n - k) * std::log1p(-p));
}

// Exact leave-one-out agreement for n annotators voting "a" with probability p
// independently, excluding votes whose remaining n - 1 annotators tie.
double exact_consistency(int n, double p) {
  double agree = 0.0, counted = 0.0;
  const int m = n - 1;
  for (int k = 0; k <= m; ++k) {  // k of the others vote "a"
    const double w = binomial_pmf(m, k, p);
    if (2 * k == m) continue;
    const bool majority_a = 2 * k > m;
    // The held-out voter picks "a" with probability p.
    agree += w * (majority_a ? p : 1.0 - p);
    counted += w;
  }
  return agree / counted;
}

std::vector<Group> coin_groups(std::size_t n_groups, std::size_t annotators, double p,
                               std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution coin(p);
  std::vector<Group> groups;
  for (std::size_t g = 0; g < n_groups; ++g) {
    Group group{"p" + std::to_string(g), {"x" + std::to_string(g), "y" + std::to_string(g)}, {}};
    for (std::size_t a = 0; a < annotators; ++a) {
      RankingAnnotation ann{"u" + std::to_string(a), group.image_ids};
      if (!coin(rng)) std::swap(ann.ranking[0], ann.ranking[1]);
      group.annotations.push_back(ann);
    }
    groups.push_back(group);
  }
  return groups;
}

PlantedWorld world(std::uint64_t seed, std::size_t prompts = 80) {
  WorldConfig c;
  c.dim_t = 10;
  c.dim_i = 10;
  c.d = 5;
  c.n_prompts = prompts;
  c.seed = seed;
  return generate_world(c);
}

ScoringModel negated(ScoringModel m) {
  for (double& v : m.image_projection.values()) v = -v;
  return m;
}

}  // namespace

TEST(Accuracy, ThreeOfFourCorrect) {
  const std::vector<PairwiseComparison> pairs = {pair("p", 1.0), pair("p", 0.0), pair("p", 1.0),
                                                 pair("p", 0.0)};
  const std::vector<double> prob = {0.9, 0.2, 0.6, 0.7};
  const auto r = accuracy_from_predictions(pairs, prob);
  EXPECT_EQ(r.n_pairs, 4u);
  EXPECT_DOUBLE_EQ(*r.accuracy, 0.75);
  EXPECT_DOUBLE_EQ(r.n_correct, 3.0);
}

TEST(Accuracy, SoftLabelsUseMajoritySide) {
  const std::vector<PairwiseComparison> pairs = {pair("p", 0.7, 10), pair("p", 0.3, 10)};
  const auto r = accuracy_from_predictions(pairs, std::vector<double>{0.51, 0.51});
  EXPECT_DOUBLE_EQ(*r.accuracy, 0.5);
}

TEST(Accuracy, AllHumanTiesGiveEmptyAccuracy) {
  const std::vector<PairwiseComparison> pairs = {pair("p", 0.5, 2), pair("q", 0.5, 4)};
  const auto r = accuracy_from_predictions(pairs, std::vector<double>{0.9, 0.1});
  EXPECT_EQ(r.n_pairs, 0u);
  EXPECT_EQ(r.n_excluded_ties, 2u);
  EXPECT_FALSE(r.accuracy.has_value());
  EXPECT_TRUE(accuracy_to_json(r)["accuracy"].is_null());
}

TEST(Accuracy, PredictionTiesEarnHalfCredit) {
  const std::vector<PairwiseComparison> pairs = {pair("p", 1.0), pair("p", 0.0)};
  const auto r = accuracy_from_predictions(pairs, std::vector<double>{0.5, 0.5 + 1e-13});
  EXPECT_DOUBLE_EQ(r.n_correct, 1.0);
  EXPECT_DOUBLE_EQ(*r.accuracy, 0.5);
}

TEST(Accuracy, PerStyleBreakdown) {
  const std::vector<PairwiseComparison> pairs = {pair("p", 1.0), pair("q", 1.0), pair("q", 0.0)};
  const StyleMap styles = {{"p", StyleCategory::kPhoto}, {"q", StyleCategory::kAnimation}};
  const auto r = accuracy_from_predictions(pairs, std::vector<double>{0.9, 0.9, 0.9}, &styles);
  EXPECT_DOUBLE_EQ(*r.per_style.at(StyleCategory::kPhoto).accuracy(), 1.0);
  EXPECT_DOUBLE_EQ(*r.per_style.at(StyleCategory::kAnimation).accuracy(), 0.5);
}

TEST(Accuracy, PlantedModelAgreesWithItsOwnHardLabels) {
  const PlantedWorld w = world(1);
  const auto pairs = label_pairs(w, 5, LabelMode::kHardArgmax, 1);
  const auto r = pairwise_accuracy(w.planted, pairs, *w.embeddings);
  EXPECT_DOUBLE_EQ(*r.accuracy, 1.0);
}

TEST(Accuracy, RandomCoinScorerIsNearHalf) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const std::size_t n = 20000;
  std::vector<PairwiseComparison> pairs;
  std::vector<double> prob;
  for (std::size_t i = 0; i < n; ++i) {
    pairs.push_back(pair("p", i % 2 ? 1.0 : 0.0));
    prob.push_back(u(rng));
  }
  const double acc = *accuracy_from_predictions(pairs, prob).accuracy;
  EXPECT_NEAR(acc, 0.5, 3.0 * std::sqrt(0.25 / n));
}

TEST(Accuracy, InvariantUnderMonotoneScoreTransform) {
  const PlantedWorld w = world(3);
  const auto pairs = label_pairs(w, 5, LabelMode::kSampled, 3);
  const ScoringModel m = init_model(10, 10, std::nullopt, 3, 0.3);
  std::vector<double> logits, cubed;
  for (const auto& p : pairs) {
    const auto prompt = w.embeddings->prompt(p.prompt_id);
    const double sa = score(m, prompt, w.embeddings->image(p.image_a));
    const double sb = score(m, prompt, w.embeddings->image(p.image_b));
    logits.push_back(predict_from_scores(sa, sb).prob_a);
    auto f = [](double s) { return std::pow(s, 3) + 2.0 * s; };
    cubed.push_back(predict_from_scores(f(sa), f(sb)).prob_a);
  }
  EXPECT_EQ(accuracy_from_predictions(pairs, logits).n_correct,
            accuracy_from_predictions(pairs, cubed).n_correct);
  EXPECT_EQ(pairwise_accuracy(m, pairs, *w.embeddings).n_correct,
            accuracy_from_predictions(pairs, logits).n_correct);
}

TEST(Accuracy, ThreadCountDoesNotMatter) {
  const PlantedWorld w = world(4);
  const auto pairs = label_pairs(w, 5, LabelMode::kSampled, 4);
  const ScoringModel m = init_model(10, 10, std::nullopt, 4, 0.3);
  EXPECT_EQ(accuracy_to_json(pairwise_accuracy(m, pairs, *w.embeddings, 1)),
            accuracy_to_json(pairwise_accuracy(m, pairs, *w.embeddings, 8)));
}

TEST(Accuracy, UnresolvableIdThrows) {
  const PlantedWorld w = world(5, 4);
  auto pairs = label_pairs(w, 1, LabelMode::kSampled, 5);
  pairs[0].prompt_id = "nobody";
  EXPECT_THROW(pairwise_accuracy(w.planted, pairs, *w.embeddings), Error);
}

TEST(Matrix, ScorerMatchingEveryVoteFillsOnes) {
  const PlantedWorld w = world(6);
  const auto groups = sample_rankings(w, 3, LabelMode::kHardArgmax, 6);
  const auto m = model_vs_model_matrix(w.planted, groups, w.image_sources(), *w.embeddings);
  ASSERT_EQ(m.model_ids.size(), 4u);
  ASSERT_EQ(m.cells.size(), 6u);
  for (const auto& [key, cell] : m.cells) {
    EXPECT_GT(cell.votes, 0u);
    EXPECT_DOUBLE_EQ(*cell.fraction(), 1.0);
  }
}

TEST(Matrix, NegatedScorerComplementsEveryCell) {
  const PlantedWorld w = world(7);
  const auto groups = sample_rankings(w, 5, LabelMode::kSampled, 7);
  const ScoringModel m = init_model(10, 10, std::nullopt, 7, 0.5);
  const auto base = model_vs_model_matrix(m, groups, w.image_sources(), *w.embeddings);
  const auto flipped = model_vs_model_matrix(negated(m), groups, w.image_sources(), *w.embeddings);
  ASSERT_EQ(base.cells.size(), flipped.cells.size());
  for (const auto& [key, cell] : base.cells) {
    const auto other = flipped.cells.at(key);
    EXPECT_EQ(cell.votes, other.votes);
    EXPECT_NEAR(*cell.fraction() + *other.fraction(), 1.0, 1e-12);
  }
}

TEST(Matrix, AnnotatorOrderDoesNotMatter) {
  const PlantedWorld w = world(8);
  auto groups = sample_rankings(w, 6, LabelMode::kSampled, 8);
  const ScoringModel m = init_model(10, 10, std::nullopt, 8, 0.5);
  const auto base = matrix_to_json(model_vs_model_matrix(m, groups, w.image_sources(), *w.embeddings));
  std::mt19937_64 rng(8);
  for (auto& g : groups) std::shuffle(g.annotations.begin(), g.annotations.end(), rng);
  EXPECT_EQ(matrix_to_json(model_vs_model_matrix(m, groups, w.image_sources(), *w.embeddings)), base);
}

TEST(Matrix, AbsentCellWhenSourcesNeverMeet) {
  std::vector<Group> groups = {{"p1", {"i1", "i2"}, {{"u", {"i1", "i2"}}}},
                               {"p2", {"i3", "i4"}, {{"u", {"i4", "i3"}}}}};
  const std::map<std::string, std::string> sources = {
      {"i1", "A"}, {"i2", "B"}, {"i3", "C"}, {"i4", "D"}};
  const auto m = model_vs_model_matrix_from_scores(groups, sources, {{2.0, 1.0}, {0.0, 1.0}});
  EXPECT_EQ(m.cell("A", "B").votes, 1u);
  EXPECT_DOUBLE_EQ(*m.cell("B", "A").fraction(), 1.0);
  EXPECT_DOUBLE_EQ(*m.cell("C", "D").fraction(), 1.0);
  EXPECT_EQ(m.cell("A", "C").votes, 0u);
  EXPECT_FALSE(m.cell("A", "C").fraction().has_value());
  const auto table = render_matrix_table(m);
  EXPECT_NE(table.find("100.0%"), std::string::npos);
}

TEST(Matrix, ScoreTiesAndSameSource) {
  std::vector<Group> groups = {{"p", {"i1", "i2", "i3"}, {{"u", {"i1", "i2", "i3"}}}}};
  const std::map<std::string, std::string> sources = {{"i1", "A"}, {"i2", "A"}, {"i3", "B"}};
  const auto m = model_vs_model_matrix_from_scores(groups, sources, {{1.0, 1.0, 1.0}});
  // i1-i2 share a source; i1-i3 and i2-i3 tie in score.
  EXPECT_EQ(m.cell("A", "B").votes, 2u);
  EXPECT_DOUBLE_EQ(m.cell("A", "B").agreed, 1.0);
}

TEST(Matrix, UnmappedImageThrows) {
  std::vector<Group> groups = {{"p", {"i1", "i2"}, {{"u", {"i1", "i2"}}}}};
  EXPECT_THROW(model_vs_model_matrix_from_scores(groups, {{"i1", "A"}}, {{1.0, 0.0}}), Error);
}

TEST(SingleHuman, UnanimousIsOne) {
  const auto groups = coin_groups(10, 5, 1.0, 1);
  const auto r = single_human_consistency(groups);
  EXPECT_DOUBLE_EQ(*r.agreement, 1.0);
  EXPECT_EQ(r.n_votes, 50u);
}

TEST(SingleHuman, OneContrarianAmongTen) {
  std::vector<Group> groups = coin_groups(1, 10, 1.0, 1);
  std::swap(groups[0].annotations[3].ranking[0], groups[0].annotations[3].ranking[1]);
  const auto r = single_human_consistency(groups);
  EXPECT_EQ(r.n_votes, 10u);
  EXPECT_DOUBLE_EQ(*r.agreement, 0.9);
}

TEST(SingleHuman, TiedRemaindersAreExcluded) {
  // Three annotators split 2-1: the two in the majority each face a 1-1 tie.
  std::vector<Group> groups = coin_groups(1, 3, 1.0, 1);
  std::swap(groups[0].annotations[0].ranking[0], groups[0].annotations[0].ranking[1]);
  const auto r = single_human_consistency(groups);
  EXPECT_EQ(r.n_excluded_votes, 2u);
  EXPECT_EQ(r.n_votes, 1u);
  EXPECT_DOUBLE_EQ(*r.agreement, 0.0);
}

TEST(SingleHuman, SkipsSmallGroupsAndFailsWithoutEligibleOnes) {
  auto groups = coin_groups(5, 2, 0.5, 2);
  EXPECT_THROW(single_human_consistency(groups), Error);
  const auto eligible = coin_groups(3, 4, 1.0, 3);
  groups.insert(groups.end(), eligible.begin(), eligible.end());
  EXPECT_EQ(single_human_consistency(groups).n_groups, 3u);
}

TEST(SingleHuman, MatchesExactBinomialForBiasedCoins) {
  // Monte Carlo against the closed-form expectation, for odd and even panels.
  for (auto [annotators, p] : {std::pair{10, 0.5}, {10, 0.7}, {5, 0.8}, {4, 0.6}}) {
    const std::size_t n_groups = 4000;
    const auto r = single_human_consistency(coin_groups(n_groups, annotators, p, 11 + annotators));
    const double expected = exact_consistency(annotators, p);
    // Votes within a group are dependent; bound with one independent draw per group.
    const double sigma = std::sqrt(expected * (1 - expected) / static_cast<double>(n_groups));
    EXPECT_NEAR(*r.agreement, expected, 4.0 * sigma) << annotators << " annotators, p=" << p;
  }
}

TEST(Render, AccuracyTableHasPercentages) {
  AccuracyReport r;
  r.n_pairs = 3;
  r.n_correct = 2;
  r.accuracy = 2.0 / 3.0;
  r.per_style[StyleCategory::kConceptArt] = {3, 2};
  const auto t = render_accuracy_table({{"mine", r}});
  EXPECT_NE(t.find("66.7"), std::string::npos);
  EXPECT_NE(t.find("Concept-art"), std::string::npos);
}
