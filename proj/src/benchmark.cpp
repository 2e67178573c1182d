#include "prefbench/benchmark.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

namespace prefbench {
namespace {

using nlohmann::json;

[[noreturn]] void invalid(const std::string& what) {
  throw Error(ErrorCode::kValidation, "benchmark input: " + what);
}

std::vector<BenchmarkPrompt> parse_prompt_list(const json& list, const std::string& where) {
  if (!list.is_array()) invalid(where + " must be an array");
  std::vector<BenchmarkPrompt> out;
  out.reserve(list.size());
  for (std::size_t i = 0; i < list.size(); ++i) {
    const json& e = list[i];
    const std::string at = where + "[" + std::to_string(i) + "]";
    if (!e.is_object() || !e.contains("prompt_id") || !e["prompt_id"].is_string()) {
      invalid(at + ": field 'prompt_id' must be a string");
    }
    if (!e.contains("image_ids") || !e["image_ids"].is_array()) {
      invalid(at + ": field 'image_ids' must be an array");
    }
    BenchmarkPrompt p;
    p.prompt_id = e["prompt_id"].get<std::string>();
    for (const auto& id : e["image_ids"]) {
      if (!id.is_string()) invalid(at + ": field 'image_ids' must contain strings");
      p.image_ids.push_back(id.get<std::string>());
    }
    out.push_back(std::move(p));
  }
  return out;
}

void check_prompts(const std::vector<BenchmarkPrompt>& prompts, const std::string& where) {
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    if (prompts[i].prompt_id.empty()) invalid(where + ": empty prompt_id at " + std::to_string(i));
    if (prompts[i].image_ids.empty()) {
      invalid(where + ": prompt '" + prompts[i].prompt_id + "' has no images");
    }
  }
}

json prompt_list_to_json(const std::vector<BenchmarkPrompt>& prompts) {
  json list = json::array();
  for (const auto& p : prompts) list.push_back({{"prompt_id", p.prompt_id}, {"image_ids", p.image_ids}});
  return list;
}

}  // namespace

void BenchmarkInput::validate() const {
  if (model_id.empty()) invalid("field 'model_id' is empty");
  if (chunk_size == 0) invalid("chunk_size must be positive");
  for (const auto& [style, prompts] : styles) {
    const std::string where = std::string("style '") + style_key(style) + "'";
    check_prompts(prompts, where);
    if (prompts.empty() || prompts.size() % chunk_size != 0) {
      invalid(where + " has " + std::to_string(prompts.size()) +
              " prompts, not a positive multiple of chunk size " + std::to_string(chunk_size));
    }
  }
  for (const auto& [name, prompts] : flat_lists) {
    check_prompts(prompts, "flat list '" + name + "'");
    if (prompts.empty()) invalid("flat list '" + name + "' is empty");
  }
}

const StyleResult* BenchmarkReport::find(StyleCategory style) const {
  for (const auto& s : styles) {
    if (s.style == style) return &s;
  }
  return nullptr;
}

BenchmarkInput parse_benchmark_input(const nlohmann::json& doc, std::size_t chunk_size) {
  if (!doc.is_object()) invalid("top level must be an object");
  BenchmarkInput input;
  input.chunk_size = chunk_size;
  if (!doc.contains("model_id") || !doc["model_id"].is_string()) {
    invalid("field 'model_id' must be a string");
  }
  input.model_id = doc["model_id"].get<std::string>();
  if (doc.contains("styles")) {
    const json& styles = doc["styles"];
    if (!styles.is_object()) invalid("field 'styles' must be an object");
    for (auto it = styles.begin(); it != styles.end(); ++it) {
      auto style = try_parse_style(it.key());
      if (!style) invalid("unknown style '" + it.key() + "'");
      if (input.styles.contains(*style)) invalid("style '" + it.key() + "' given twice");
      input.styles[*style] = parse_prompt_list(it.value(), "styles." + it.key());
    }
  }
  if (doc.contains("flat_lists")) {
    const json& flat = doc["flat_lists"];
    if (!flat.is_object()) invalid("field 'flat_lists' must be an object");
    for (auto it = flat.begin(); it != flat.end(); ++it) {
      input.flat_lists[it.key()] = parse_prompt_list(it.value(), "flat_lists." + it.key());
    }
  }
  input.validate();
  return input;
}

BenchmarkInput load_benchmark_input(const std::filesystem::path& path, std::size_t chunk_size) {
  return parse_benchmark_input(read_json_file(path), chunk_size);
}

nlohmann::json benchmark_input_to_json(const BenchmarkInput& input) {
  json styles = json::object();
  for (const auto& [style, prompts] : input.styles) styles[style_key(style)] = prompt_list_to_json(prompts);
  json flat = json::object();
  for (const auto& [name, prompts] : input.flat_lists) flat[name] = prompt_list_to_json(prompts);
  return {{"model_id", input.model_id}, {"styles", styles}, {"flat_lists", flat}};
}

double prompt_score(const ScoringModel& model, const BenchmarkPrompt& prompt,
                    const EmbeddingSet& embeddings) {
  if (prompt.image_ids.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "prompt '" + prompt.prompt_id + "' has no images");
  }
  const auto text = embeddings.prompt(prompt.prompt_id);
  double sum = 0.0;
  for (const auto& id : prompt.image_ids) sum += raw_similarity(model, text, embeddings.image(id));
  return sum / static_cast<double>(prompt.image_ids.size());
}

std::vector<double> prompt_scores(const ScoringModel& model,
                                  const std::vector<BenchmarkPrompt>& prompts,
                                  const EmbeddingSet& embeddings, int threads) {
  for (const auto& p : prompts) {
    embeddings.prompt(p.prompt_id);
    for (const auto& id : p.image_ids) embeddings.image(id);
  }
  std::vector<double> scores(prompts.size());
  parallel_for(prompts.size(), threads,
               [&](std::size_t i) { scores[i] = prompt_score(model, prompts[i], embeddings); });
  return scores;
}

StyleResult chunked_statistics(StyleCategory style, std::span<const double> scores,
                               std::size_t chunk_size) {
  if (chunk_size == 0 || scores.empty() || scores.size() % chunk_size != 0) {
    throw Error(ErrorCode::kValidation,
                std::to_string(scores.size()) + " prompt scores are not a positive multiple of " +
                    "chunk size " + std::to_string(chunk_size));
  }
  StyleResult result;
  result.style = style;
  for (std::size_t start = 0; start < scores.size(); start += chunk_size) {
    result.chunk_means.push_back(mean(scores.subspan(start, chunk_size)));
  }
  result.mean = mean(result.chunk_means);
  result.std = sample_std(result.chunk_means);
  return result;
}

BenchmarkReport benchmark_model(const ScoringModel& model, const BenchmarkInput& input,
                                const EmbeddingSet& embeddings, int threads) {
  input.validate();
  BenchmarkReport report;
  report.model_id = input.model_id;
  for (const auto& [style, prompts] : input.styles) {
    const auto scores = prompt_scores(model, prompts, embeddings, threads);
    report.styles.push_back(chunked_statistics(style, scores, input.chunk_size));
  }
  for (const auto& [name, prompts] : input.flat_lists) {
    report.flat_scores[name] = flat_benchmark(model, prompts, embeddings, threads);
  }
  return report;
}

double flat_benchmark(const ScoringModel& model, const std::vector<BenchmarkPrompt>& prompts,
                      const EmbeddingSet& embeddings, int threads) {
  if (prompts.empty()) throw Error(ErrorCode::kInvalidArgument, "empty prompt list");
  const auto scores = prompt_scores(model, prompts, embeddings, threads);
  return mean(scores);
}

std::vector<std::pair<std::string, double>> rank_models(
    const std::vector<BenchmarkReport>& reports, StyleCategory style) {
  std::vector<std::pair<std::string, double>> out;
  out.reserve(reports.size());
  for (const auto& r : reports) {
    const StyleResult* s = r.find(style);
    if (!s) {
      throw Error(ErrorCode::kValidation, "report for '" + r.model_id + "' has no style '" +
                                              style_key(style) + "'");
    }
    out.emplace_back(r.model_id, s->mean);
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  return out;
}

std::vector<StabilityPoint> stability_from_scores(std::span<const double> scores,
                                                  std::span<const std::size_t> sizes,
                                                  std::size_t resamples, std::uint64_t seed) {
  if (resamples < 2) throw Error(ErrorCode::kInvalidArgument, "resamples must be >= 2");
  for (std::size_t n : sizes) {
    if (n == 0 || n > scores.size()) {
      throw Error(ErrorCode::kInvalidArgument,
                  "subset size " + std::to_string(n) + " outside [1, " +
                      std::to_string(scores.size()) + "]");
    }
  }
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> index(scores.size());
  std::vector<StabilityPoint> curve;
  std::vector<double> means(resamples);
  for (std::size_t n : sizes) {
    for (std::size_t r = 0; r < resamples; ++r) {
      std::iota(index.begin(), index.end(), std::size_t{0});
      // Partial Fisher-Yates: the first n slots are a uniform n-subset.
      for (std::size_t i = 0; i < n; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, index.size() - 1);
        std::swap(index[i], index[pick(rng)]);
      }
      // Summing in index order makes equal subsets give bitwise-equal means.
      std::sort(index.begin(), index.begin() + static_cast<std::ptrdiff_t>(n));
      double sum = 0.0;
      for (std::size_t i = 0; i < n; ++i) sum += scores[index[i]];
      means[r] = sum / static_cast<double>(n);
    }
    curve.push_back({n, sample_std(means)});
  }
  return curve;
}

std::vector<StabilityPoint> stability_curve(const ScoringModel& model,
                                            const std::vector<BenchmarkPrompt>& prompts,
                                            const EmbeddingSet& embeddings,
                                            std::span<const std::size_t> sizes,
                                            std::size_t resamples, std::uint64_t seed,
                                            int threads) {
  const auto scores = prompt_scores(model, prompts, embeddings, threads);
  return stability_from_scores(scores, sizes, resamples, seed);
}

nlohmann::json benchmark_report_to_json(const BenchmarkReport& report) {
  json styles = json::object();
  for (const auto& s : report.styles) {
    styles[style_key(s.style)] = {{"chunk_means", s.chunk_means}, {"mean", s.mean}, {"std", s.std}};
  }
  return {{"model_id", report.model_id}, {"styles", styles}, {"flat_scores", report.flat_scores}};
}

nlohmann::json ranking_to_json(const std::vector<std::pair<std::string, double>>& ranking) {
  json list = json::array();
  for (const auto& [id, m] : ranking) list.push_back({{"model_id", id}, {"mean", m}});
  return list;
}

nlohmann::json stability_to_json(const std::vector<StabilityPoint>& curve) {
  json list = json::array();
  for (const auto& p : curve) list.push_back({{"n", p.n}, {"std", p.std}});
  return list;
}

std::string format_mean_std(double mean, double std) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f ± %.2f×10⁻³", mean, std * 1e3);
  return buf;
}

std::string render_benchmark_table(const std::vector<BenchmarkReport>& reports) {
  std::set<StyleCategory> styles;
  std::set<std::string> flats;
  for (const auto& r : reports) {
    for (const auto& s : r.styles) styles.insert(s.style);
    for (const auto& [name, _] : r.flat_scores) flats.insert(name);
  }
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> header = {"Model"};
  for (auto s : styles) header.push_back(style_name(s));
  for (const auto& f : flats) header.push_back(f);
  rows.push_back(header);
  for (const auto& r : reports) {
    std::vector<std::string> row = {r.model_id};
    for (auto s : styles) {
      const StyleResult* res = r.find(s);
      row.push_back(res ? format_mean_std(res->mean, res->std) : "-");
    }
    for (const auto& f : flats) {
      auto it = r.flat_scores.find(f);
      char buf[32] = "-";
      if (it != r.flat_scores.end()) std::snprintf(buf, sizeof buf, "%.4f", it->second);
      row.push_back(buf);
    }
    rows.push_back(row);
  }
  // Column widths in code points; the +/- and superscripts are multi-byte.
  auto display_width = [](const std::string& s) {
    std::size_t n = 0;
    for (unsigned char c : s) n += (c & 0xC0) != 0x80;
    return n;
  };
  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], display_width(row[c]));
  }
  std::ostringstream out;
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) out << "  ";
      out << row[c];
      if (c + 1 < row.size()) out << std::string(width[c] - display_width(row[c]), ' ');
    }
    out << "\n";
  }
  return out.str();
}

std::string render_stability_table(const std::vector<StabilityPoint>& curve) {
  std::ostringstream out;
  out << "     n  std of subset mean\n";
  for (const auto& p : curve) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%6zu  %.6e\n", p.n, p.std);
    out << buf;
  }
  return out.str();
}

}  // namespace prefbench
