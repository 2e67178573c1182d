#include "prefbench/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>
#include <unordered_map>

namespace prefbench {
namespace {

std::string percent(std::optional<double> v) {
  if (!v) return "-";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", 100.0 * *v);
  return buf;
}

std::string pad(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

nlohmann::json optional_number(std::optional<double> v) {
  return v ? nlohmann::json(*v) : nlohmann::json();
}

}  // namespace

std::optional<double> AccuracyCount::accuracy() const {
  if (n_pairs == 0) return std::nullopt;
  return n_correct / static_cast<double>(n_pairs);
}

std::optional<double> MatrixCell::fraction() const {
  if (votes == 0) return std::nullopt;
  return agreed / static_cast<double>(votes);
}

StyleMap style_map(const std::vector<PromptRecord>& prompts) {
  StyleMap m;
  for (const auto& p : prompts) m.emplace(p.prompt_id, p.style);
  return m;
}

AccuracyReport accuracy_from_predictions(const std::vector<PairwiseComparison>& pairs,
                                         std::span<const double> prob_a,
                                         const StyleMap* styles) {
  if (prob_a.size() != pairs.size()) {
    throw Error(ErrorCode::kInvalidArgument, "one prediction per pair is required");
  }
  AccuracyReport report;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& p = pairs[i];
    if (p.label == 0.5) {
      ++report.n_excluded_ties;
      continue;
    }
    const bool human_a = p.label > 0.5;
    double credit = 0.0;
    if (std::abs(prob_a[i] - 0.5) < kPredictionTieTolerance) {
      credit = 0.5;
    } else if ((prob_a[i] > 0.5) == human_a) {
      credit = 1.0;
    }
    ++report.n_pairs;
    report.n_correct += credit;
    if (styles) {
      auto it = styles->find(p.prompt_id);
      if (it != styles->end()) {
        auto& bucket = report.per_style[it->second];
        ++bucket.n_pairs;
        bucket.n_correct += credit;
      }
    }
  }
  if (report.n_pairs > 0) {
    report.accuracy = report.n_correct / static_cast<double>(report.n_pairs);
  }
  return report;
}

AccuracyReport pairwise_accuracy(const ScoringModel& model,
                                 const std::vector<PairwiseComparison>& pairs,
                                 const EmbeddingSet& embeddings, int threads,
                                 const StyleMap* styles) {
  // Resolve up front so a missing id fails before any scoring work.
  for (const auto& p : pairs) {
    embeddings.prompt(p.prompt_id);
    embeddings.image(p.image_a);
    embeddings.image(p.image_b);
  }
  std::vector<double> prob(pairs.size());
  parallel_for(pairs.size(), threads, [&](std::size_t i) {
    const auto& p = pairs[i];
    prob[i] = predict_pair(model, embeddings.prompt(p.prompt_id), embeddings.image(p.image_a),
                           embeddings.image(p.image_b))
                  .prob_a;
  });
  return accuracy_from_predictions(pairs, prob, styles);
}

MatrixCell PairwiseMatrix::cell(const std::string& a, const std::string& b) const {
  auto key = a < b ? std::make_pair(a, b) : std::make_pair(b, a);
  auto it = cells.find(key);
  return it == cells.end() ? MatrixCell{} : it->second;
}

PairwiseMatrix model_vs_model_matrix_from_scores(
    const std::vector<Group>& groups, const std::map<std::string, std::string>& image_sources,
    const std::vector<std::vector<double>>& scores) {
  if (scores.size() != groups.size()) {
    throw Error(ErrorCode::kInvalidArgument, "one score row per group is required");
  }
  PairwiseMatrix matrix;
  std::set<std::string> models;
  std::vector<std::size_t> position;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const auto& group = groups[g];
    const std::size_t k = group.image_ids.size();
    if (scores[g].size() != k) {
      throw Error(ErrorCode::kInvalidArgument,
                  "group " + std::to_string(g) + ": score count does not match image count");
    }
    std::vector<const std::string*> source(k);
    for (std::size_t i = 0; i < k; ++i) {
      auto it = image_sources.find(group.image_ids[i]);
      if (it == image_sources.end()) {
        throw Error(ErrorCode::kValidation, "group " + std::to_string(g) + ": image '" +
                                                group.image_ids[i] + "' has no source model");
      }
      source[i] = &it->second;
      models.insert(it->second);
    }
    std::unordered_map<std::string_view, std::size_t> slot;
    for (std::size_t i = 0; i < k; ++i) slot[group.image_ids[i]] = i;

    for (const auto& ann : group.annotations) {
      position.assign(k, 0);
      for (std::size_t r = 0; r < k; ++r) position[slot.at(ann.ranking[r])] = r;
      for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = i + 1; j < k; ++j) {
          if (*source[i] == *source[j]) continue;
          const bool human_i = position[i] < position[j];
          double credit = 0.0;
          if (scores[g][i] == scores[g][j]) {
            credit = 0.5;
          } else if ((scores[g][i] > scores[g][j]) == human_i) {
            credit = 1.0;
          }
          auto key = *source[i] < *source[j] ? std::make_pair(*source[i], *source[j])
                                             : std::make_pair(*source[j], *source[i]);
          auto& cell = matrix.cells[key];
          cell.agreed += credit;
          ++cell.votes;
        }
      }
    }
  }
  matrix.model_ids.assign(models.begin(), models.end());
  return matrix;
}

PairwiseMatrix model_vs_model_matrix(const ScoringModel& model, const std::vector<Group>& groups,
                                     const std::map<std::string, std::string>& image_sources,
                                     const EmbeddingSet& embeddings, int threads) {
  for (const auto& g : groups) {
    embeddings.prompt(g.prompt_id);
    for (const auto& id : g.image_ids) embeddings.image(id);
  }
  std::vector<std::vector<double>> scores(groups.size());
  parallel_for(groups.size(), threads, [&](std::size_t g) {
    const auto prompt = embeddings.prompt(groups[g].prompt_id);
    scores[g].reserve(groups[g].image_ids.size());
    for (const auto& id : groups[g].image_ids) {
      scores[g].push_back(score(model, prompt, embeddings.image(id)));
    }
  });
  return model_vs_model_matrix_from_scores(groups, image_sources, scores);
}

ConsistencyReport single_human_consistency(const std::vector<Group>& groups) {
  ConsistencyReport report;
  double agreed = 0.0;
  std::vector<std::size_t> position;
  for (const auto& group : groups) {
    const std::size_t n = group.annotations.size();
    if (n < 3) continue;
    ++report.n_groups;
    const std::size_t k = group.image_ids.size();
    std::unordered_map<std::string_view, std::size_t> slot;
    for (std::size_t i = 0; i < k; ++i) slot[group.image_ids[i]] = i;
    // prefers[a][i*k+j]: annotator a ranks image i above image j.
    std::vector<std::vector<char>> prefers(n, std::vector<char>(k * k, 0));
    for (std::size_t a = 0; a < n; ++a) {
      position.assign(k, 0);
      for (std::size_t r = 0; r < k; ++r) position[slot.at(group.annotations[a].ranking[r])] = r;
      for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = i + 1; j < k; ++j) prefers[a][i * k + j] = position[i] < position[j];
      }
    }
    for (std::size_t i = 0; i < k; ++i) {
      for (std::size_t j = i + 1; j < k; ++j) {
        std::size_t total_for_i = 0;
        for (std::size_t a = 0; a < n; ++a) total_for_i += prefers[a][i * k + j];
        for (std::size_t a = 0; a < n; ++a) {
          const bool mine = prefers[a][i * k + j];
          const std::size_t others_for_i = total_for_i - (mine ? 1 : 0);
          const std::size_t others_against = (n - 1) - others_for_i;
          if (others_for_i == others_against) {
            ++report.n_excluded_votes;
            continue;
          }
          const bool majority_i = others_for_i > others_against;
          ++report.n_votes;
          if (majority_i == mine) agreed += 1.0;
        }
      }
    }
  }
  if (report.n_groups == 0) {
    throw Error(ErrorCode::kValidation, "no group has at least 3 annotators");
  }
  if (report.n_votes > 0) report.agreement = agreed / static_cast<double>(report.n_votes);
  return report;
}

nlohmann::json accuracy_to_json(const AccuracyReport& report) {
  nlohmann::json styles = nlohmann::json::object();
  for (const auto& [style, count] : report.per_style) {
    styles[style_key(style)] = {{"n_pairs", count.n_pairs},
                                {"n_correct", count.n_correct},
                                {"accuracy", optional_number(count.accuracy())}};
  }
  return {{"n_pairs", report.n_pairs},
          {"n_correct", report.n_correct},
          {"accuracy", optional_number(report.accuracy)},
          {"n_excluded_ties", report.n_excluded_ties},
          {"per_style", styles}};
}

nlohmann::json matrix_to_json(const PairwiseMatrix& matrix) {
  nlohmann::json cells = nlohmann::json::array();
  for (std::size_t i = 0; i < matrix.model_ids.size(); ++i) {
    for (std::size_t j = i + 1; j < matrix.model_ids.size(); ++j) {
      const auto c = matrix.cell(matrix.model_ids[i], matrix.model_ids[j]);
      cells.push_back({{"model_a", matrix.model_ids[i]},
                       {"model_b", matrix.model_ids[j]},
                       {"votes", c.votes},
                       {"agreed", c.agreed},
                       {"agreement", optional_number(c.fraction())}});
    }
  }
  return {{"models", matrix.model_ids}, {"cells", cells}};
}

nlohmann::json consistency_to_json(const ConsistencyReport& report) {
  return {{"agreement", optional_number(report.agreement)},
          {"n_votes", report.n_votes},
          {"n_excluded_votes", report.n_excluded_votes},
          {"n_groups", report.n_groups}};
}

std::string render_accuracy_table(
    const std::vector<std::pair<std::string, AccuracyReport>>& rows) {
  std::size_t width = 5;
  for (const auto& [label, report] : rows) {
    width = std::max(width, label.size());
    for (const auto& [style, _] : report.per_style) {
      width = std::max(width, std::string(style_name(style)).size() + 2);
    }
  }
  std::ostringstream out;
  out << pad("Model", width) << "  Accuracy  Pairs\n";
  for (const auto& [label, report] : rows) {
    out << pad(label, width) << "  " << pad(percent(report.accuracy), 8) << "  "
        << report.n_pairs << "\n";
    for (const auto& [style, count] : report.per_style) {
      out << pad("  " + std::string(style_name(style)), width) << "  "
          << pad(percent(count.accuracy()), 8) << "  " << count.n_pairs << "\n";
    }
  }
  return out.str();
}

std::string render_matrix_table(const PairwiseMatrix& matrix) {
  const auto& ids = matrix.model_ids;
  std::ostringstream out;
  if (ids.size() < 2) return "(fewer than two source models)\n";
  std::size_t width = 5;
  for (const auto& id : ids) width = std::max(width, id.size());
  out << pad("Model", width);
  for (std::size_t j = 1; j < ids.size(); ++j) out << "  " << pad(ids[j], std::max<std::size_t>(ids[j].size(), 6));
  out << "\n";
  for (std::size_t i = 0; i + 1 < ids.size(); ++i) {
    out << pad(ids[i], width);
    for (std::size_t j = 1; j < ids.size(); ++j) {
      std::string cell = "-";
      if (j > i) {
        auto f = matrix.cell(ids[i], ids[j]).fraction();
        if (f) cell = percent(f) + "%";
      }
      out << "  " << pad(cell, std::max<std::size_t>(ids[j].size(), 6));
    }
    out << "\n";
  }
  return out.str();
}

}  // namespace prefbench
