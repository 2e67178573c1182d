#include "prefbench/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <set>
#include <sstream>
#include <tuple>
#include <unordered_map>
#include <unordered_set>

namespace prefbench {
namespace {

using nlohmann::json;

[[noreturn]] void invalid(const std::string& where, const std::string& what) {
  throw Error(ErrorCode::kValidation, where + ": " + what);
}

const json& field(const json& obj, const char* name, const std::string& where) {
  if (!obj.is_object()) invalid(where, "expected an object");
  auto it = obj.find(name);
  if (it == obj.end()) invalid(where, "missing field '" + std::string(name) + "'");
  return *it;
}

std::string string_field(const json& obj, const char* name, const std::string& where) {
  const json& v = field(obj, name, where);
  if (!v.is_string()) invalid(where, "field '" + std::string(name) + "' must be a string");
  return v.get<std::string>();
}

std::vector<std::string> string_list(const json& obj, const char* name,
                                     const std::string& where) {
  const json& v = field(obj, name, where);
  if (!v.is_array()) invalid(where, "field '" + std::string(name) + "' must be an array");
  std::vector<std::string> out;
  out.reserve(v.size());
  for (const auto& e : v) {
    if (!e.is_string()) {
      invalid(where, "field '" + std::string(name) + "' must contain strings");
    }
    out.push_back(e.get<std::string>());
  }
  return out;
}

std::string lower_ascii(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string normalize_prompt(std::string_view text) {
  auto is_space = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
  std::size_t b = 0, e = text.size();
  while (b < e && is_space(text[b])) ++b;
  while (e > b && is_space(text[e - 1])) --e;
  return lower_ascii(text.substr(b, e - b));
}

void validate_group(const Group& g, std::size_t index,
                    const std::unordered_set<std::string>& prompt_ids) {
  const std::string where = "group " + std::to_string(index);
  if (g.prompt_id.empty()) invalid(where, "field 'prompt_id' is empty");
  if (!prompt_ids.empty() && !prompt_ids.contains(g.prompt_id)) {
    invalid(where, "field 'prompt_id': unknown prompt '" + g.prompt_id + "'");
  }
  if (g.image_ids.size() < 2) invalid(where, "field 'image_ids' needs at least 2 images");
  std::unordered_set<std::string> images;
  for (const auto& id : g.image_ids) {
    if (id.empty()) invalid(where, "field 'image_ids' contains an empty id");
    if (!images.insert(id).second) {
      invalid(where, "field 'image_ids' repeats image '" + id + "'");
    }
  }
  std::unordered_set<std::string> annotators;
  for (std::size_t a = 0; a < g.annotations.size(); ++a) {
    const auto& ann = g.annotations[a];
    const std::string aw = where + ", annotation " + std::to_string(a);
    if (ann.annotator_id.empty()) invalid(aw, "field 'annotator_id' is empty");
    if (!annotators.insert(ann.annotator_id).second) {
      invalid(aw, "field 'annotator_id' repeats '" + ann.annotator_id + "'");
    }
    if (ann.ranking.size() != g.image_ids.size()) {
      invalid(aw, "field 'ranking' is not a permutation of image_ids (length " +
                      std::to_string(ann.ranking.size()) + ", expected " +
                      std::to_string(g.image_ids.size()) + ")");
    }
    std::unordered_set<std::string> ranked;
    for (const auto& id : ann.ranking) {
      if (!images.contains(id)) {
        invalid(aw, "field 'ranking' lists unknown image '" + id + "'");
      }
      if (!ranked.insert(id).second) {
        invalid(aw, "field 'ranking' repeats image '" + id + "' (ties are not allowed)");
      }
    }
  }
}

void validate_pair(const PairwiseComparison& p, std::size_t index) {
  const std::string where = "pair " + std::to_string(index);
  if (p.prompt_id.empty()) invalid(where, "field 'prompt_id' is empty");
  if (p.image_a.empty() || p.image_b.empty()) invalid(where, "empty image id");
  if (p.image_a == p.image_b) invalid(where, "image_a equals image_b");
  if (!(p.image_a < p.image_b)) invalid(where, "image_a must sort before image_b");
  if (p.n_annotators == 0) invalid(where, "field 'n_annotators' must be positive");
  if (!(p.label >= 0.0 && p.label <= 1.0)) invalid(where, "field 'label' outside [0,1]");
  const double votes = p.label * p.n_annotators;
  if (std::abs(votes - std::round(votes)) > 1e-9) {
    invalid(where, "label x n_annotators is not an integer count");
  }
}

}  // namespace

std::optional<StyleCategory> try_parse_style(std::string_view text) {
  std::string key = lower_ascii(text);
  std::erase_if(key, [](char c) { return c == '-' || c == '_' || c == ' '; });
  if (key == "animation") return StyleCategory::kAnimation;
  if (key == "conceptart") return StyleCategory::kConceptArt;
  if (key == "painting") return StyleCategory::kPainting;
  if (key == "photo") return StyleCategory::kPhoto;
  if (key == "other") return StyleCategory::kOther;
  return std::nullopt;
}

StyleCategory parse_style(std::string_view text) {
  auto style = try_parse_style(text);
  if (!style) throw Error(ErrorCode::kValidation, "unknown style '" + std::string(text) + "'");
  return *style;
}

const char* style_key(StyleCategory style) {
  switch (style) {
    case StyleCategory::kAnimation: return "animation";
    case StyleCategory::kConceptArt: return "concept-art";
    case StyleCategory::kPainting: return "painting";
    case StyleCategory::kPhoto: return "photo";
    case StyleCategory::kOther: return "other";
  }
  return "other";
}

const char* style_name(StyleCategory style) {
  switch (style) {
    case StyleCategory::kAnimation: return "Animation";
    case StyleCategory::kConceptArt: return "Concept-art";
    case StyleCategory::kPainting: return "Painting";
    case StyleCategory::kPhoto: return "Photo";
    case StyleCategory::kOther: return "Other";
  }
  return "Other";
}

std::uint32_t PairwiseComparison::votes_for_a() const {
  return static_cast<std::uint32_t>(std::lround(label * n_annotators));
}

nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open '" + path.string() + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::kFormat, "malformed JSON in '" + path.string() + "': " + e.what());
  }
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw Error(ErrorCode::kIo, "write failed for '" + path.string() + "'");
}

Dataset parse_dataset(const nlohmann::json& doc) {
  if (!doc.is_object()) invalid("dataset", "top level must be an object");
  Dataset ds;
  const json& prompts = field(doc, "prompts", "dataset");
  const json& groups = field(doc, "groups", "dataset");
  if (!prompts.is_array()) invalid("dataset", "field 'prompts' must be an array");
  if (!groups.is_array()) invalid("dataset", "field 'groups' must be an array");

  std::unordered_set<std::string> prompt_ids;
  ds.prompts.reserve(prompts.size());
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    const std::string where = "prompt " + std::to_string(i);
    PromptRecord rec;
    rec.prompt_id = string_field(prompts[i], "prompt_id", where);
    rec.text = string_field(prompts[i], "text", where);
    auto style = try_parse_style(string_field(prompts[i], "style", where));
    if (!style) {
      invalid(where, "field 'style': unknown style '" +
                         prompts[i]["style"].get<std::string>() + "'");
    }
    rec.style = *style;
    if (rec.prompt_id.empty()) invalid(where, "field 'prompt_id' is empty");
    if (rec.text.empty()) invalid(where, "field 'text' is empty");
    if (!prompt_ids.insert(rec.prompt_id).second) {
      invalid(where, "duplicate prompt_id '" + rec.prompt_id + "'");
    }
    ds.prompts.push_back(std::move(rec));
  }

  ds.groups.reserve(groups.size());
  for (std::size_t i = 0; i < groups.size(); ++i) {
    const std::string where = "group " + std::to_string(i);
    Group g;
    g.prompt_id = string_field(groups[i], "prompt_id", where);
    g.image_ids = string_list(groups[i], "image_ids", where);
    const json& anns = field(groups[i], "annotations", where);
    if (!anns.is_array()) invalid(where, "field 'annotations' must be an array");
    g.annotations.reserve(anns.size());
    for (std::size_t a = 0; a < anns.size(); ++a) {
      const std::string aw = where + ", annotation " + std::to_string(a);
      RankingAnnotation ann;
      ann.annotator_id = string_field(anns[a], "annotator_id", aw);
      ann.ranking = string_list(anns[a], "ranking", aw);
      g.annotations.push_back(std::move(ann));
    }
    validate_group(g, i, prompt_ids);
    ds.groups.push_back(std::move(g));
  }
  return ds;
}

Dataset load_dataset(const std::filesystem::path& path) {
  return parse_dataset(read_json_file(path));
}

nlohmann::json dataset_to_json(const Dataset& dataset) {
  json prompts = json::array();
  for (const auto& p : dataset.prompts) {
    prompts.push_back({{"prompt_id", p.prompt_id}, {"text", p.text}, {"style", style_key(p.style)}});
  }
  json groups = json::array();
  for (const auto& g : dataset.groups) {
    json anns = json::array();
    for (const auto& a : g.annotations) {
      anns.push_back({{"annotator_id", a.annotator_id}, {"ranking", a.ranking}});
    }
    groups.push_back({{"prompt_id", g.prompt_id}, {"image_ids", g.image_ids}, {"annotations", anns}});
  }
  return {{"prompts", prompts}, {"groups", groups}};
}

void write_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  write_text_file(path, dataset_to_json(dataset).dump() + "\n");
}

std::vector<PairwiseComparison> rankings_to_pairs(const std::vector<Group>& groups) {
  struct Tally {
    const std::string* prompt;
    const std::string* a;
    const std::string* b;
    std::uint32_t wins;
    std::uint32_t votes;
  };
  std::vector<Tally> tallies;
  std::size_t expected = 0;
  for (const auto& g : groups) expected += g.image_ids.size() * (g.image_ids.size() - 1) / 2;
  tallies.reserve(expected);

  std::vector<std::size_t> order;
  std::unordered_map<std::string_view, std::size_t> slot;
  std::vector<std::size_t> position;
  std::vector<std::uint32_t> wins;
  for (const auto& g : groups) {
    const std::size_t k = g.image_ids.size();
    order.resize(k);
    for (std::size_t i = 0; i < k; ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t x, std::size_t y) { return g.image_ids[x] < g.image_ids[y]; });
    slot.clear();
    for (std::size_t i = 0; i < k; ++i) slot[g.image_ids[order[i]]] = i;

    // wins[i*k + j]: votes for sorted image i over sorted image j (i < j).
    wins.assign(k * k, 0);
    position.resize(k);
    for (const auto& ann : g.annotations) {
      for (std::size_t r = 0; r < k; ++r) position[slot.at(ann.ranking[r])] = r;
      for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = i + 1; j < k; ++j) {
          if (position[i] < position[j]) ++wins[i * k + j];
        }
      }
    }
    const auto votes = static_cast<std::uint32_t>(g.annotations.size());
    if (votes == 0) continue;
    for (std::size_t i = 0; i < k; ++i) {
      for (std::size_t j = i + 1; j < k; ++j) {
        tallies.push_back({&g.prompt_id, &g.image_ids[order[i]], &g.image_ids[order[j]],
                           wins[i * k + j], votes});
      }
    }
  }

  std::sort(tallies.begin(), tallies.end(), [](const Tally& x, const Tally& y) {
    return std::tie(*x.prompt, *x.a, *x.b) < std::tie(*y.prompt, *y.a, *y.b);
  });

  std::vector<PairwiseComparison> out;
  out.reserve(tallies.size());
  for (std::size_t i = 0; i < tallies.size();) {
    std::uint64_t w = 0, n = 0;
    std::size_t j = i;
    for (; j < tallies.size() && *tallies[j].prompt == *tallies[i].prompt &&
           *tallies[j].a == *tallies[i].a && *tallies[j].b == *tallies[i].b;
         ++j) {
      w += tallies[j].wins;
      n += tallies[j].votes;
    }
    PairwiseComparison p;
    p.prompt_id = *tallies[i].prompt;
    p.image_a = *tallies[i].a;
    p.image_b = *tallies[i].b;
    p.n_annotators = static_cast<std::uint32_t>(n);
    p.label = static_cast<double>(w) / static_cast<double>(n);
    out.push_back(std::move(p));
    i = j;
  }
  return out;
}

std::uint64_t count_votes(const std::vector<PairwiseComparison>& pairs) {
  std::uint64_t n = 0;
  for (const auto& p : pairs) n += p.n_annotators;
  return n;
}

DatasetStats dataset_stats(const std::vector<PromptRecord>& prompts,
                           const std::vector<Group>& groups) {
  DatasetStats stats;
  stats.n_groups = groups.size();
  stats.n_prompts = prompts.size();
  std::unordered_set<std::string_view> images;
  for (const auto& g : groups) {
    const std::uint64_t k = g.image_ids.size();
    const std::uint64_t per_annotator = k * (k - 1) / 2;
    for (const auto& id : g.image_ids) images.insert(id);
    for (const auto& a : g.annotations) stats.n_pairs_per_annotator[a.annotator_id] += per_annotator;
    stats.n_total_binary_comparisons += g.annotations.size() * per_annotator;
  }
  stats.n_images = images.size();
  if (!prompts.empty()) {
    std::unordered_set<std::string> texts;
    for (const auto& p : prompts) texts.insert(normalize_prompt(p.text));
    stats.unique_prompt_fraction =
        static_cast<double>(texts.size()) / static_cast<double>(prompts.size());
  }
  return stats;
}

nlohmann::json stats_to_json(const DatasetStats& stats) {
  return {{"n_groups", stats.n_groups},
          {"n_images", stats.n_images},
          {"n_prompts", stats.n_prompts},
          {"unique_prompt_fraction", stats.unique_prompt_fraction},
          {"n_pairs_per_annotator", stats.n_pairs_per_annotator},
          {"n_total_binary_comparisons", stats.n_total_binary_comparisons}};
}

PairSplit split_pairs(const std::vector<PairwiseComparison>& pairs, std::uint64_t seed,
                      double holdout_fraction) {
  if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "holdout_fraction must lie in (0, 1)");
  }
  std::set<std::string> distinct;
  for (const auto& p : pairs) distinct.insert(p.prompt_id);
  if (distinct.size() < 2) {
    throw Error(ErrorCode::kInvalidArgument, "need at least 2 distinct prompts to split");
  }
  std::vector<std::string> prompts(distinct.begin(), distinct.end());
  std::mt19937_64 rng(seed);
  std::shuffle(prompts.begin(), prompts.end(), rng);
  const auto n = static_cast<long>(prompts.size());
  const long held = std::clamp(std::lround(holdout_fraction * static_cast<double>(n)), 1L, n - 1);
  std::unordered_set<std::string> test_prompts(prompts.begin(), prompts.begin() + held);

  PairSplit split;
  for (const auto& p : pairs) {
    (test_prompts.contains(p.prompt_id) ? split.test : split.train).push_back(p);
  }
  return split;
}

std::vector<PairwiseComparison> parse_pairs(const nlohmann::json& doc) {
  const json& list = field(doc, "pairs", "pairs file");
  if (!list.is_array()) invalid("pairs file", "field 'pairs' must be an array");
  std::vector<PairwiseComparison> out;
  out.reserve(list.size());
  for (std::size_t i = 0; i < list.size(); ++i) {
    const std::string where = "pair " + std::to_string(i);
    PairwiseComparison p;
    p.prompt_id = string_field(list[i], "prompt_id", where);
    p.image_a = string_field(list[i], "image_a", where);
    p.image_b = string_field(list[i], "image_b", where);
    const json& label = field(list[i], "label", where);
    const json& n = field(list[i], "n_annotators", where);
    if (!label.is_number()) invalid(where, "field 'label' must be a number");
    if (!n.is_number_integer() || n.get<std::int64_t>() <= 0 ||
        n.get<std::int64_t>() > std::numeric_limits<std::uint32_t>::max()) {
      invalid(where, "field 'n_annotators' must be a positive integer");
    }
    p.label = label.get<double>();
    p.n_annotators = static_cast<std::uint32_t>(n.get<std::int64_t>());
    validate_pair(p, i);
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<PairwiseComparison> load_pairs(const std::filesystem::path& path) {
  return parse_pairs(read_json_file(path));
}

nlohmann::json pairs_to_json(const std::vector<PairwiseComparison>& pairs) {
  json list = json::array();
  for (const auto& p : pairs) {
    list.push_back({{"prompt_id", p.prompt_id},
                    {"image_a", p.image_a},
                    {"image_b", p.image_b},
                    {"label", p.label},
                    {"n_annotators", p.n_annotators}});
  }
  return {{"pairs", list}};
}

void write_pairs(const std::vector<PairwiseComparison>& pairs,
                 const std::filesystem::path& path) {
  write_text_file(path, pairs_to_json(pairs).dump() + "\n");
}

std::map<std::string, std::string> load_image_sources(const std::filesystem::path& path) {
  const json doc = read_json_file(path);
  const json& sources = field(doc, "sources", "sources file");
  if (!sources.is_object()) invalid("sources file", "field 'sources' must be an object");
  std::map<std::string, std::string> out;
  for (auto it = sources.begin(); it != sources.end(); ++it) {
    if (!it.value().is_string()) invalid("sources file", "source of '" + it.key() + "' must be a string");
    out.emplace(it.key(), it.value().get<std::string>());
  }
  return out;
}

}  // namespace prefbench
