#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "terra/core/error.hpp"
#include "terra/core/version.hpp"
#include "terra/pipeline/commands.hpp"
#include "terra/service/service.hpp"

namespace fs = std::filesystem;
using namespace terra;

namespace {

struct Flags {
  std::string config;
  std::optional<uint64_t> seed;
  std::optional<std::string> out;
  std::optional<int> count;
  std::optional<int> steps;
  std::optional<std::string> sketch;
};

void log_line(const std::string& s) { std::cerr << s << std::endl; }

pipeline::PipelineConfig resolve(const std::string& command, const Flags& f) {
  pipeline::PipelineConfig c = f.config.empty() ? pipeline::pipeline_config_from_json(nlohmann::json::object())
                                                : pipeline::load_pipeline_config(f.config);
  if (f.seed) {
    c.seed = *f.seed;
    c.dataset.synth.seed = *f.seed;
  }
  if (f.count) (command == "dataset-build" ? c.dataset.count : c.sample_count) = *f.count;
  if (f.steps) c.sample.steps = c.service.default_steps = *f.steps;
  if (f.sketch) c.sketch = *f.sketch;
  if (f.out) {
    if (command == "dataset-build") c.paths.dataset = *f.out;
    else if (command == "sketch-extract") c.paths.sketches = *f.out;
    else if (command == "sample") c.paths.samples = *f.out;
    else if (command == "evaluate") c.paths.report = *f.out;
    else if (command.rfind("train-", 0) == 0) c.paths.models = *f.out;
  }
  c.validate();
  return c;
}

void serve(const pipeline::PipelineConfig& c) {
  std::optional<service::Backend> backend;
  try {
    backend = service::make_backend(std::make_shared<const pipeline::Generator>(pipeline::load_generator(c.paths.models)));
    log_line("model loaded from " + c.paths.models.string() + ", checkpoint " + backend->checkpoint_hash);
  } catch (const InvalidArgument& e) {
    log_line(std::string("no model loaded: ") + e.what());
  }
  service::GenerationService svc(c.service, backend);
  svc.start();
  service::serve(svc, [&](int port) { log_line("listening on http://" + c.service.host + ":" + std::to_string(port)); });
  svc.stop();
}

void run(const std::string& command, const Flags& f) {
  const pipeline::PipelineConfig c = resolve(command, f);
  if (command == "dataset-build") pipeline::dataset_build(c, log_line);
  else if (command == "sketch-extract") pipeline::sketch_extract(c, log_line);
  else if (command == "train-vae") pipeline::train_vaes(c, log_line);
  else if (command == "train-ldm") pipeline::train_joint(c, log_line);
  else if (command == "train-control") pipeline::train_adapter(c, log_line);
  else if (command == "sample") pipeline::sample(c, log_line);
  else if (command == "evaluate") pipeline::evaluate(c, log_line);
  else if (command == "serve") serve(c);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"terrafusion: joint heightmap and texture generation with latent diffusion"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  app.fallthrough();

  Flags f;
  app.add_option("--config", f.config, "JSON pipeline config")->check(CLI::ExistingFile);
  app.add_option("--seed", f.seed, "run seed");
  app.add_option("--out", f.out, "output directory of the command");
  app.add_option("--count", f.count, "pairs to build or sample")->check(CLI::PositiveNumber);
  app.add_option("--steps", f.steps, "sampling steps")->check(CLI::PositiveNumber);
  app.add_option("--sketch", f.sketch, "condition PNG for sample")->check(CLI::ExistingFile);

  const std::pair<const char*, const char*> commands[] = {
      {"dataset-build", "build a dataset from synthetic terrain or local DEM tiles"},
      {"sketch-extract", "extract valley/ridge/cliff sketches from dataset heightmaps"},
      {"train-vae", "train the heightmap and texture VAEs"},
      {"train-ldm", "train the joint latent diffusion model"},
      {"train-control", "train the conditioning adapter"},
      {"sample", "generate heightmap/texture pairs"},
      {"evaluate", "correlation statistics and Frechet distance against the dataset"},
      {"serve", "run the HTTP generation service"},
  };
  for (const auto& [name, help] : commands) app.add_subcommand(name, help);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  const std::string command = app.get_subcommands().front()->get_name();
  try {
    run(command, f);
    return 0;
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << std::endl;
    return 2;
  }
}
