#include "prefbench/prefbench.h"

#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <memory>
#include <new>
#include <sstream>
#include <string>
#include <vector>

#include "prefbench/benchmark.hpp"
#include "prefbench/dataset.hpp"
#include "prefbench/embedding_store.hpp"
#include "prefbench/evaluator.hpp"
#include "prefbench/scorer.hpp"
#include "prefbench/synth.hpp"
#include "prefbench/trainer.hpp"

struct pb_embeddings {
  prefbench::EmbeddingMatrix matrix;
};

struct pb_model {
  prefbench::ScoringModel model;
};

struct pb_report {
  std::string json;
  std::string table;
  std::string summary;
  nlohmann::json doc;
};

namespace {

using namespace prefbench;

thread_local std::string g_last_error;

pb_status status_of(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return PB_ERR_INVALID_ARGUMENT;
    case ErrorCode::kIo: return PB_ERR_IO;
    case ErrorCode::kFormat: return PB_ERR_FORMAT;
    case ErrorCode::kValidation: return PB_ERR_VALIDATION;
    case ErrorCode::kNumeric: return PB_ERR_NUMERIC;
  }
  return PB_ERR_INTERNAL;
}

template <typename Fn>
pb_status guarded(Fn&& fn) {
  g_last_error.clear();
  try {
    fn();
    return PB_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return status_of(e.code());
  } catch (const nlohmann::json::exception& e) {
    g_last_error = e.what();
    return PB_ERR_FORMAT;
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return PB_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return PB_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return PB_ERR_INTERNAL;
  }
}

void require(bool condition, const char* message) {
  if (!condition) throw Error(ErrorCode::kInvalidArgument, message);
}

bool given(const char* s) { return s != nullptr && s[0] != '\0'; }

std::unique_ptr<pb_report> make_report(nlohmann::json doc, std::string table, std::string summary) {
  auto r = std::make_unique<pb_report>();
  r->json = doc.dump(2) + "\n";
  r->doc = std::move(doc);
  r->table = std::move(table);
  r->summary = std::move(summary);
  return r;
}

std::shared_ptr<const EmbeddingSet> load_embedding_set(const pb_embedding_paths& paths) {
  if (given(paths.combined)) {
    require(!given(paths.text) && !given(paths.image),
            "use either --embeddings or --text-embeddings/--image-embeddings, not both");
    auto m = std::make_shared<const EmbeddingMatrix>(read_embeddings(paths.combined));
    return std::make_shared<EmbeddingSet>(m);
  }
  require(given(paths.text) && given(paths.image),
          "embeddings required: --embeddings, or both --text-embeddings and --image-embeddings");
  auto text = std::make_shared<const EmbeddingMatrix>(read_embeddings(paths.text));
  auto image = std::string(paths.text) == paths.image
                   ? text
                   : std::make_shared<const EmbeddingMatrix>(read_embeddings(paths.image));
  return std::make_shared<EmbeddingSet>(text, image);
}

bool has_embeddings(const pb_embedding_paths& p) {
  return given(p.combined) || given(p.text) || given(p.image);
}

std::vector<PairwiseComparison> pairs_from_options(const pb_options& o) {
  if (given(o.pairs_path)) return load_pairs(o.pairs_path);
  require(given(o.dataset_path), "either --pairs or --dataset is required");
  return rankings_to_pairs(load_dataset(o.dataset_path).groups);
}

std::string hex64(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, v);
  return buf;
}

std::string percent_or_dash(std::optional<double> v) {
  return v ? fmt("%.1f%%", 100.0 * *v) : std::string("n/a");
}

StyleCategory pick_style(const pb_options& o, const BenchmarkInput& input) {
  if (given(o.style)) return parse_style(o.style);
  if (input.styles.size() == 1) return input.styles.begin()->first;
  throw Error(ErrorCode::kInvalidArgument, "--style is required when the input has several styles");
}

std::string model_label(const char* path) {
  return std::filesystem::path(path).stem().string();
}

}  // namespace

extern "C" {

const char* pb_version(void) { return "0.1.0"; }

const char* pb_last_error(void) { return g_last_error.c_str(); }

const char* pb_status_name(pb_status status) {
  switch (status) {
    case PB_OK: return "ok";
    case PB_ERR_INVALID_ARGUMENT: return "invalid argument";
    case PB_ERR_IO: return "io error";
    case PB_ERR_FORMAT: return "format error";
    case PB_ERR_VALIDATION: return "validation error";
    case PB_ERR_NUMERIC: return "numeric error";
    case PB_ERR_INTERNAL: return "internal error";
  }
  return "unknown";
}

pb_status pb_embeddings_create(uint32_t dim, pb_embeddings** out) {
  return guarded([&] {
    require(out != nullptr, "null output handle");
    *out = new pb_embeddings{EmbeddingMatrix(dim)};
  });
}

pb_status pb_embeddings_add(pb_embeddings* emb, const char* id, const float* values,
                            size_t n_values) {
  return guarded([&] {
    require(emb && id && (values || n_values == 0), "null argument");
    emb->matrix.add(id, std::span<const float>(values, n_values));
  });
}

pb_status pb_embeddings_read(const char* path, pb_embeddings** out) {
  return guarded([&] {
    require(path && out, "null argument");
    *out = new pb_embeddings{read_embeddings(path)};
  });
}

pb_status pb_embeddings_write(const pb_embeddings* emb, const char* path) {
  return guarded([&] {
    require(emb && path, "null argument");
    write_embeddings(emb->matrix, path);
  });
}

size_t pb_embeddings_count(const pb_embeddings* emb) { return emb ? emb->matrix.size() : 0; }

uint32_t pb_embeddings_dim(const pb_embeddings* emb) {
  return emb ? static_cast<uint32_t>(emb->matrix.dim()) : 0;
}

const char* pb_embeddings_id(const pb_embeddings* emb, size_t row) {
  if (!emb || row >= emb->matrix.size()) return nullptr;
  return emb->matrix.id(row).c_str();
}

pb_status pb_embeddings_lookup(const pb_embeddings* emb, const char* id, float* out,
                               size_t n_out) {
  return guarded([&] {
    require(emb && id && out, "null argument");
    require(n_out == emb->matrix.dim(), "output buffer size must equal dim");
    auto row = emb->matrix.lookup(id);
    std::copy(row.begin(), row.end(), out);
  });
}

void pb_embeddings_free(pb_embeddings* emb) { delete emb; }

pb_status pb_model_init(uint32_t dim_t, uint32_t dim_i, uint32_t d, uint64_t seed,
                        pb_model** out) {
  return guarded([&] {
    require(out != nullptr, "null output handle");
    std::optional<std::size_t> shared;
    if (d != 0) shared = d;
    *out = new pb_model{init_model(dim_t, dim_i, shared, seed)};
  });
}

pb_status pb_model_load(const char* path, pb_model** out) {
  return guarded([&] {
    require(path && out, "null argument");
    *out = new pb_model{load_checkpoint(path)};
  });
}

pb_status pb_model_save(const pb_model* model, const char* path) {
  return guarded([&] {
    require(model && path, "null argument");
    save_checkpoint(model->model, path);
  });
}

pb_status pb_model_dims(const pb_model* model, uint32_t* dim_t, uint32_t* dim_i, uint32_t* d) {
  return guarded([&] {
    require(model != nullptr, "null model");
    if (dim_t) *dim_t = static_cast<uint32_t>(model->model.text_dim());
    if (dim_i) *dim_i = static_cast<uint32_t>(model->model.image_dim());
    if (d) *d = static_cast<uint32_t>(model->model.dim());
  });
}

double pb_model_temperature(const pb_model* model) {
  return model ? model->model.temperature() : NAN;
}

pb_status pb_model_score(const pb_model* model, const double* prompt, size_t n_prompt,
                         const double* image, size_t n_image, double* out) {
  return guarded([&] {
    require(model && prompt && image && out, "null argument");
    *out = score(model->model, {prompt, n_prompt}, {image, n_image});
  });
}

pb_status pb_model_raw_similarity(const pb_model* model, const double* prompt, size_t n_prompt,
                                  const double* image, size_t n_image, double* out) {
  return guarded([&] {
    require(model && prompt && image && out, "null argument");
    *out = raw_similarity(model->model, {prompt, n_prompt}, {image, n_image});
  });
}

pb_status pb_model_predict_pair(const pb_model* model, const double* prompt, size_t n_prompt,
                                const double* image_a, const double* image_b, size_t n_image,
                                pb_pair_prediction* out) {
  return guarded([&] {
    require(model && prompt && image_a && image_b && out, "null argument");
    const auto p = predict_pair(model->model, {prompt, n_prompt}, {image_a, n_image},
                                {image_b, n_image});
    *out = {p.score_a, p.score_b, p.prob_a, p.prob_b};
  });
}

void pb_model_free(pb_model* model) { delete model; }

void pb_options_init(pb_options* options) {
  if (!options) return;
  *options = pb_options{};
  options->threads = 1;
}

const char* pb_report_json(const pb_report* report) { return report ? report->json.c_str() : ""; }
const char* pb_report_table(const pb_report* report) { return report ? report->table.c_str() : ""; }
const char* pb_report_summary(const pb_report* report) {
  return report ? report->summary.c_str() : "";
}

pb_status pb_report_number(const pb_report* report, const char* key, double* out) {
  return guarded([&] {
    require(report && key && out, "null argument");
    auto it = report->doc.find(key);
    if (it == report->doc.end() || !it->is_number()) {
      throw Error(ErrorCode::kInvalidArgument, std::string("report has no numeric field '") + key + "'");
    }
    *out = it->get<double>();
  });
}

void pb_report_free(pb_report* report) { delete report; }

pb_status pb_convert(const pb_options* o, pb_report** out) {
  return guarded([&] {
    require(o && out, "null argument");
    require(given(o->dataset_path), "--dataset is required");
    const Dataset ds = load_dataset(o->dataset_path);
    const auto pairs = rankings_to_pairs(ds.groups);
    if (given(o->out_path)) write_pairs(pairs, o->out_path);
    const std::uint64_t votes = count_votes(pairs);
    nlohmann::json doc = {{"n_groups", ds.groups.size()},
                          {"n_votes", votes},
                          {"n_pairs", pairs.size()}};
    std::ostringstream table;
    table << "groups  " << ds.groups.size() << "\nvotes   " << votes << "\npairs   "
          << pairs.size() << "\n";
    *out = make_report(doc, table.str(),
                       "converted " + std::to_string(ds.groups.size()) + " groups: " +
                           std::to_string(votes) + " binary comparisons merged into " +
                           std::to_string(pairs.size()) + " pairs")
               .release();
  });
}

pb_status pb_stats(const pb_options* o, pb_report** out) {
  return guarded([&] {
    require(o && out, "null argument");
    require(given(o->dataset_path), "--dataset is required");
    const Dataset ds = load_dataset(o->dataset_path);
    const DatasetStats s = dataset_stats(ds.prompts, ds.groups);
    std::ostringstream table;
    table << "groups                  " << s.n_groups << "\n"
          << "images                  " << s.n_images << "\n"
          << "prompts                 " << s.n_prompts << "\n"
          << "unique prompt fraction  " << fmt("%.4f", s.unique_prompt_fraction) << "\n"
          << "annotators              " << s.n_pairs_per_annotator.size() << "\n"
          << "binary comparisons      " << s.n_total_binary_comparisons << "\n";
    *out = make_report(stats_to_json(s), table.str(),
                       std::to_string(s.n_groups) + " groups, " +
                           std::to_string(s.n_total_binary_comparisons) + " binary comparisons")
               .release();
  });
}

pb_status pb_validate(const pb_options* o, pb_report** out) {
  return guarded([&] {
    require(o && out, "null argument");
    require(given(o->dataset_path) || given(o->pairs_path) || has_embeddings(o->embeddings),
            "nothing to validate: pass --dataset, --pairs or embeddings");
    nlohmann::json doc = {{"valid", true}};
    std::optional<Dataset> ds;
    std::vector<PairwiseComparison> pairs;
    std::shared_ptr<const EmbeddingSet> emb;
    if (given(o->dataset_path)) {
      ds = load_dataset(o->dataset_path);
      doc["n_prompts"] = ds->prompts.size();
      doc["n_groups"] = ds->groups.size();
    }
    if (given(o->pairs_path)) {
      pairs = load_pairs(o->pairs_path);
      doc["n_pairs"] = pairs.size();
    }
    if (has_embeddings(o->embeddings)) {
      emb = load_embedding_set(o->embeddings);
      doc["text_dim"] = emb->text_dim();
      doc["image_dim"] = emb->image_dim();
      doc["n_text_embeddings"] = emb->text().size();
      doc["n_image_embeddings"] = emb->image().size();
      if (ds) {
        for (std::size_t g = 0; g < ds->groups.size(); ++g) {
          const auto& group = ds->groups[g];
          if (!emb->has_prompt(group.prompt_id)) {
            throw Error(ErrorCode::kValidation, "group " + std::to_string(g) + ": prompt '" +
                                                    group.prompt_id + "' has no text embedding");
          }
          for (const auto& id : group.image_ids) {
            if (!emb->has_image(id)) {
              throw Error(ErrorCode::kValidation, "group " + std::to_string(g) + ": image '" +
                                                      id + "' has no image embedding");
            }
          }
        }
      }
      for (std::size_t i = 0; i < pairs.size(); ++i) {
        const auto& p = pairs[i];
        for (const auto* id : {&p.image_a, &p.image_b}) {
          if (!emb->has_image(*id)) {
            throw Error(ErrorCode::kValidation, "pair " + std::to_string(i) + ": image '" + *id +
                                                    "' has no image embedding");
          }
        }
        if (!emb->has_prompt(p.prompt_id)) {
          throw Error(ErrorCode::kValidation, "pair " + std::to_string(i) + ": prompt '" +
                                                  p.prompt_id + "' has no text embedding");
        }
      }
    }
    *out = make_report(doc, "valid\n", "inputs are valid").release();
  });
}

pb_status pb_train(const pb_options* o, pb_report** out) {
  return guarded([&] {
    require(o && out, "null argument");
    require(given(o->out_path), "--out is required for train");
    TrainConfig config = paper_config();
    if (given(o->config_path)) config = parse_train_config(read_json_file(o->config_path));
    if (o->has_seed) config.seed = o->seed;
    config.validate();

    const auto pairs = pairs_from_options(*o);
    const auto emb = load_embedding_set(o->embeddings);
    ScoringModel model = given(o->model_path)
                             ? load_checkpoint(o->model_path)
                             : init_model(emb->text_dim(), emb->image_dim(), std::nullopt, config.seed);
    TrainOptions options;
    options.threads = o->threads;
    if (o->progress) {
      options.on_step = [o](std::int64_t step, double loss, double lr) {
        o->progress(step, loss, lr, o->progress_user);
      };
    }
    const TrainResult result = train(std::move(model), pairs, *emb, config, {}, options);
    save_checkpoint(result.model, o->out_path);

    const auto& r = result.report;
    nlohmann::json doc = train_report_to_json(r);
    doc["config"] = train_config_to_json(config);
    doc["config_hash"] = hex64(config_hash(config));
    doc["steps"] = config.total_steps;
    if (!r.loss_trace.empty()) doc["final_loss"] = r.loss_trace.back();
    doc["temperature"] = result.model.temperature();

    std::ostringstream table;
    table << "steps             " << config.total_steps << "\n"
          << "train pairs       " << r.n_train_pairs << "\n"
          << "held-out pairs    " << r.n_heldout_pairs << "\n"
          << "final loss        "
          << (r.loss_trace.empty() ? std::string("n/a") : fmt("%.6f", r.loss_trace.back())) << "\n"
          << "train accuracy    " << percent_or_dash(r.train_accuracy) << "\n"
          << "held-out accuracy " << percent_or_dash(r.heldout_accuracy) << "\n"
          << "temperature       " << fmt("%.6g", result.model.temperature()) << "\n";
    std::string summary = "trained " + std::to_string(config.total_steps) + " steps on " +
                          std::to_string(r.n_train_pairs) + " pairs, train accuracy " +
                          percent_or_dash(r.train_accuracy);
    if (r.heldout_accuracy) summary += ", held-out accuracy " + percent_or_dash(r.heldout_accuracy);
    summary += fmt(" (%.2f s)", r.wall_clock_seconds);
    *out = make_report(doc, table.str(), summary).release();
  });
}

pb_status pb_eval(const pb_options* o, pb_report** out) {
  return guarded([&] {
    require(o && out, "null argument");
    require(given(o->model_path), "--model is required for eval");
    const ScoringModel model = load_checkpoint(o->model_path);
    const auto emb = load_embedding_set(o->embeddings);
    std::vector<PairwiseComparison> pairs;
    std::optional<StyleMap> styles;
    if (given(o->dataset_path)) {
      const Dataset ds = load_dataset(o->dataset_path);
      styles = style_map(ds.prompts);
      pairs = given(o->pairs_path) ? load_pairs(o->pairs_path) : rankings_to_pairs(ds.groups);
    } else {
      pairs = pairs_from_options(*o);
    }
    const AccuracyReport report =
        pairwise_accuracy(model, pairs, *emb, o->threads, styles ? &*styles : nullptr);
    const std::string label = model_label(o->model_path);
    *out = make_report(accuracy_to_json(report), render_accuracy_table({{label, report}}),
                       "accuracy " + percent_or_dash(report.accuracy) + " on " +
                           std::to_string(report.n_pairs) + " pairs (" +
                           std::to_string(report.n_excluded_ties) + " human ties excluded)")
               .release();
  });
}

pb_status pb_matrix(const pb_options* o, pb_report** out) {
  return guarded([&] {
    require(o && out, "null argument");
    require(given(o->model_path), "--model is required for matrix");
    require(given(o->dataset_path), "--dataset is required for matrix");
    require(given(o->sources_path), "--sources is required for matrix");
    const ScoringModel model = load_checkpoint(o->model_path);
    const Dataset ds = load_dataset(o->dataset_path);
    const auto sources = load_image_sources(o->sources_path);
    const auto emb = load_embedding_set(o->embeddings);
    const PairwiseMatrix matrix = model_vs_model_matrix(model, ds.groups, sources, *emb, o->threads);

    nlohmann::json doc = matrix_to_json(matrix);
    std::string table = render_matrix_table(matrix);
    bool eligible = false;
    for (const auto& g : ds.groups) eligible = eligible || g.annotations.size() >= 3;
    if (eligible) {
      const ConsistencyReport c = single_human_consistency(ds.groups);
      doc["single_human"] = consistency_to_json(c);
      table += "\nSingle Human  " + percent_or_dash(c.agreement) + "\n";
    } else {
      doc["single_human"] = nullptr;
    }
    *out = make_report(doc, table,
                       std::to_string(matrix.model_ids.size()) + " source models, " +
                           std::to_string(matrix.cells.size()) + " populated cells")
               .release();
  });
}

pb_status pb_benchmark(const pb_options* o, pb_report** out) {
  return guarded([&] {
    require(o && out, "null argument");
    require(given(o->model_path), "--model is required for benchmark");
    require(o->n_input_paths > 0 && o->input_paths, "at least one --input is required");
    const ScoringModel model = load_checkpoint(o->model_path);
    const auto emb = load_embedding_set(o->embeddings);
    const std::size_t chunk = o->chunk_size ? o->chunk_size : kDefaultChunkSize;

    std::vector<BenchmarkReport> reports;
    for (std::size_t i = 0; i < o->n_input_paths; ++i) {
      const BenchmarkInput input = load_benchmark_input(o->input_paths[i], chunk);
      reports.push_back(benchmark_model(model, input, *emb, o->threads));
    }

    std::vector<StyleCategory> rank_styles;
    if (given(o->style)) {
      rank_styles.push_back(parse_style(o->style));
    } else {
      for (StyleCategory s : kAllStyles) {
        bool everywhere = true;
        for (const auto& r : reports) everywhere = everywhere && r.find(s) != nullptr;
        if (everywhere) rank_styles.push_back(s);
      }
    }
    nlohmann::json rankings = nlohmann::json::object();
    std::string table = render_benchmark_table(reports);
    for (StyleCategory s : rank_styles) {
      const auto ranking = rank_models(reports, s);
      rankings[style_key(s)] = ranking_to_json(ranking);
      if (reports.size() > 1) {
        table += "\nRanking (" + std::string(style_name(s)) + "):";
        for (std::size_t k = 0; k < ranking.size(); ++k) {
          table += (k ? " > " : " ") + ranking[k].first;
        }
        table += "\n";
      }
    }
    nlohmann::json list = nlohmann::json::array();
    for (const auto& r : reports) list.push_back(benchmark_report_to_json(r));
    nlohmann::json doc = {{"chunk_size", chunk}, {"reports", list}, {"rankings", rankings}};
    *out = make_report(doc, table,
                       "benchmarked " + std::to_string(reports.size()) + " model(s) with chunk size " +
                           std::to_string(chunk))
               .release();
  });
}

pb_status pb_stability(const pb_options* o, pb_report** out) {
  return guarded([&] {
    require(o && out, "null argument");
    require(given(o->model_path), "--model is required for stability");
    require(o->n_input_paths == 1 && o->input_paths, "exactly one --input is required");
    const ScoringModel model = load_checkpoint(o->model_path);
    const auto emb = load_embedding_set(o->embeddings);
    const BenchmarkInput input = load_benchmark_input(o->input_paths[0], 1);
    const StyleCategory style = pick_style(*o, input);
    auto it = input.styles.find(style);
    if (it == input.styles.end()) {
      throw Error(ErrorCode::kValidation, std::string("input has no style '") + style_key(style) + "'");
    }
    const auto& prompts = it->second;
    std::vector<std::size_t> sizes;
    if (o->n_sizes > 0 && o->sizes) {
      sizes.assign(o->sizes, o->sizes + o->n_sizes);
    } else {
      for (std::size_t n = 10; n <= prompts.size(); n *= 2) sizes.push_back(n);
      if (sizes.empty() || sizes.back() != prompts.size()) sizes.push_back(prompts.size());
    }
    const std::size_t resamples = o->resamples ? o->resamples : 200;
    const std::uint64_t seed = o->has_seed ? o->seed : 0;
    const auto curve = stability_curve(model, prompts, *emb, sizes, resamples, seed, o->threads);
    nlohmann::json doc = {{"model_id", input.model_id},
                          {"style", style_key(style)},
                          {"n_prompts", prompts.size()},
                          {"resamples", resamples},
                          {"seed", seed},
                          {"curve", stability_to_json(curve)}};
    *out = make_report(doc, render_stability_table(curve),
                       std::to_string(curve.size()) + " subset sizes, " +
                           std::to_string(resamples) + " resamples each")
               .release();
  });
}

pb_status pb_synth(const pb_options* o, pb_report** out) {
  return guarded([&] {
    require(o && out, "null argument");
    require(given(o->out_path), "--out (directory) is required for synth");
    nlohmann::json cfg = nlohmann::json::object();
    if (given(o->config_path)) cfg = read_json_file(o->config_path);
    WorldConfig world_config = parse_world_config(cfg);
    if (o->has_seed) world_config.seed = o->seed;
    FixtureOptions fixture = parse_fixture_options(cfg);
    if (o->chunk_size) fixture.chunk_size = o->chunk_size;
    const PlantedWorld world = generate_world(world_config);
    nlohmann::json doc = write_fixture(world, fixture, o->out_path);
    *out = make_report(doc, doc.dump(2) + "\n",
                       "wrote fixture with " + std::to_string(world.prompts.size()) + " prompts to " +
                           o->out_path)
               .release();
  });
}

}  // extern "C"
