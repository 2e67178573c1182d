// prefbench command-line front end. Everything goes through the C API.
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "json.hpp"
#include "prefbench/prefbench.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;

struct Args {
  std::string dataset, pairs, embeddings, text_embeddings, image_embeddings;
  std::string config, out, style, model, sources, format = "json";
  std::vector<std::string> inputs;
  std::vector<std::size_t> sizes;
  std::uint64_t seed = 0;
  int threads = 1;
  std::uint32_t chunk_size = 0;
  std::uint32_t resamples = 0;
};

std::shared_ptr<spdlog::logger> make_logger() {
  auto logger = std::make_shared<spdlog::logger>(
      "prefbench", std::make_shared<spdlog::sinks::stderr_sink_st>());
  logger->set_pattern("[%l] %v");
  const char* env = std::getenv("PREFBENCH_LOG");
  const std::string level = env ? env : "info";
  if (level == "error") logger->set_level(spdlog::level::err);
  else if (level == "debug") logger->set_level(spdlog::level::debug);
  else logger->set_level(spdlog::level::info);
  return logger;
}

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

const char* opt(const std::string& s) { return s.empty() ? nullptr : s.c_str(); }

bool write_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  f << text;
  return static_cast<bool>(f);
}

int exit_code_for(pb_status status) {
  switch (status) {
    case PB_OK: return kExitOk;
    case PB_ERR_INVALID_ARGUMENT:
    case PB_ERR_FORMAT:
    case PB_ERR_VALIDATION: return kExitValidation;
    default: return kExitRuntime;
  }
}

void on_step(std::int64_t step, double loss, double lr, void* user) {
  auto* logger = static_cast<spdlog::logger*>(user);
  if (step % 100 == 0) logger->info("step {} loss {:.6f} lr {:.3e}", step, loss, lr);
  else logger->debug("step {} loss {:.6f} lr {:.3e}", step, loss, lr);
}

}  // namespace

int main(int argc, char** argv) {
  auto logger = make_logger();
  CLI::App app{"prefbench: learned preference scoring and benchmarking"};
  app.require_subcommand(1);
  app.set_version_flag("--version", pb_version());

  Args a;
  bool seed_given = false;
  using Command = pb_status (*)(const pb_options*, pb_report**);
  const std::vector<std::pair<std::string, std::string>> commands = {
      {"convert", "Turn ranking groups into merged pairwise comparisons"},
      {"train", "Fit the projection heads and temperature on pairwise labels"},
      {"eval", "Pairwise accuracy of a checkpoint"},
      {"matrix", "Model-vs-model agreement matrix and single-human consistency"},
      {"benchmark", "Chunked mean and std of prompt scores per style"},
      {"stability", "Std of subset means as a function of prompt count"},
      {"synth", "Write a planted-model fixture directory"},
      {"validate", "Check dataset, pairs and embeddings for consistency"},
      {"stats", "Dataset summary statistics"}};
  const std::map<std::string, Command> dispatch = {
      {"convert", pb_convert}, {"train", pb_train},         {"eval", pb_eval},
      {"matrix", pb_matrix},   {"benchmark", pb_benchmark}, {"stability", pb_stability},
      {"synth", pb_synth},     {"validate", pb_validate},   {"stats", pb_stats}};

  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--dataset", a.dataset, "Ranking dataset JSON");
    sub->add_option("--pairs", a.pairs, "Pairwise comparisons JSON");
    sub->add_option("--embeddings", a.embeddings, "Embedding file holding prompt and image ids");
    sub->add_option("--text-embeddings", a.text_embeddings, "Prompt embedding file");
    sub->add_option("--image-embeddings", a.image_embeddings, "Image embedding file");
    sub->add_option("--config", a.config, "JSON config");
    sub->add_option("--out", a.out, "Output path");
    sub->add_option_function<std::uint64_t>(
        "--seed", [&](std::uint64_t v) { a.seed = v; seed_given = true; }, "Random seed");
    sub->add_option("--threads", a.threads, "Worker threads")->check(CLI::Range(1, 1024));
    sub->add_option("--chunk-size", a.chunk_size, "Prompts per benchmark chunk")
        ->check(CLI::PositiveNumber);
    sub->add_option("--style", a.style, "Style category");
    sub->add_option("--format", a.format, "Report format")
        ->check(CLI::IsMember({"json", "table"}));
    sub->add_option("--model", a.model, "Checkpoint (train: initial weights)");
    sub->add_option("--input", a.inputs, "Benchmark input JSON (repeatable)");
    sub->add_option("--sources", a.sources, "Image-to-source-model JSON");
    sub->add_option("--sizes", a.sizes, "Stability subset sizes")->delimiter(',');
    sub->add_option("--resamples", a.resamples, "Stability resamples per size")
        ->check(CLI::PositiveNumber);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitValidation;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  pb_options o;
  pb_options_init(&o);
  o.dataset_path = opt(a.dataset);
  o.pairs_path = opt(a.pairs);
  o.model_path = opt(a.model);
  o.config_path = opt(a.config);
  o.sources_path = opt(a.sources);
  std::vector<const char*> inputs;
  for (const auto& s : a.inputs) inputs.push_back(s.c_str());
  o.input_paths = inputs.data();
  o.n_input_paths = inputs.size();
  o.embeddings = {opt(a.embeddings), opt(a.text_embeddings), opt(a.image_embeddings)};
  o.seed = a.seed;
  o.has_seed = seed_given ? 1 : 0;
  o.threads = a.threads;
  o.chunk_size = a.chunk_size;
  o.style = opt(a.style);
  o.sizes = a.sizes.data();
  o.n_sizes = a.sizes.size();
  o.resamples = a.resamples;
  const bool writes_artifact = command == "convert" || command == "train" || command == "synth";
  if (writes_artifact) o.out_path = opt(a.out);
  if (command == "train") {
    o.progress = on_step;
    o.progress_user = logger.get();
  }

  // Thread count is excluded: it never changes the output.
  std::string canonical = command;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--threads" || arg.rfind("--threads=", 0) == 0) {
      if (arg == "--threads") ++i;
      continue;
    }
    canonical += '\x1f' + arg;
  }
  if (command != "train") {
    logger->info("{}: seed {} config hash {}", command, a.seed, hex64(fnv1a(canonical)));
  }

  pb_report* report = nullptr;
  const pb_status status = dispatch.at(command)(&o, &report);
  if (status != PB_OK) {
    std::cerr << "error (" << pb_status_name(status) << "): " << pb_last_error() << "\n";
    return exit_code_for(status);
  }

  const std::string json = pb_report_json(report);
  const std::string table = pb_report_table(report);
  const std::string summary = pb_report_summary(report);
  pb_report_free(report);

  if (command == "train") {
    const auto doc = nlohmann::json::parse(json);
    logger->info("train: seed {} config hash {}", doc.at("seed").get<std::uint64_t>(),
                 doc.at("config_hash").get<std::string>());
  }

  const std::string& body = a.format == "table" ? table : json;
  if (writes_artifact) {
    // The artifact owns --out; the report lands beside it.
    if (command != "synth" && !a.out.empty()) {
      const std::string report_path = a.out + ".report.json";
      if (!write_file(report_path, json)) {
        std::cerr << "error: cannot write " << report_path << "\n";
        return kExitRuntime;
      }
    }
    if (a.format == "table") std::cout << table;
  } else if (!a.out.empty()) {
    if (!write_file(a.out, body)) {
      std::cerr << "error: cannot write " << a.out << "\n";
      return kExitRuntime;
    }
  } else {
    std::cout << body;
  }
  std::cout << summary << "\n";
  return kExitOk;
}
