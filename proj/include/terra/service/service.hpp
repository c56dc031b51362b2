#pragma once

#include <condition_variable>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "terra/pipeline/generator.hpp"

namespace httplib {
class Server;
}

namespace terra::service {

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  size_t queue_depth = 16;
  int default_steps = 20;
  std::vector<std::string> allowed_origins{"*"};
};

nlohmann::json to_json(const ServiceConfig& c);
ServiceConfig service_config_from_json(const nlohmann::json& j, ServiceConfig base = {});

enum class JobState { kQueued, kRunning, kDone, kFailed };
std::string to_string(JobState s);

struct JobRequest {
  std::optional<raster::Texture> sketch;
  int steps = 20;
  uint64_t seed = 0;
};

/// What a worker needs from a model: one terrain pair per request.
struct Backend {
  std::function<raster::TerrainPair(const JobRequest&)> generate;
  int resolution = 0;
  int max_steps = 1000;
  bool conditional = false;
  std::string checkpoint_hash;
  std::map<std::string, std::string> checkpoint_files;  // file name -> file hash
};

/// Sample 0 of pipeline::generate for the request's seed.
Backend make_backend(std::shared_ptr<const pipeline::Generator> g);

struct ApiResponse {
  int status = 200;
  nlohmann::json body;
};

/// Job store, bounded FIFO queue and worker, independent of the HTTP layer.
class GenerationService {
 public:
  /// Without a backend the service reports model_loaded false and refuses jobs.
  GenerationService(ServiceConfig cfg, std::optional<Backend> backend);
  ~GenerationService();
  GenerationService(const GenerationService&) = delete;
  GenerationService& operator=(const GenerationService&) = delete;

  ApiResponse post_generate(const std::string& body);
  ApiResponse get_job(const std::string& id) const;
  ApiResponse health() const;

  /// Starts `workers` background threads (the default config uses one).
  void start(int workers = 1);
  void stop();
  /// Runs the oldest queued job on the calling thread; false when none is queued.
  bool run_one();
  /// Blocks until no job is queued or running.
  void wait_idle();

  const ServiceConfig& config() const { return cfg_; }

 private:
  struct Job {
    JobState state = JobState::kQueued;
    JobRequest request;
    bool seeded = false;
    std::string error;
    std::vector<uint8_t> heightmap_png, texture_png;
    int width = 0, height = 0;
  };

  void execute(const std::string& id);
  void worker_loop();
  std::string new_id();

  ServiceConfig cfg_;
  std::optional<Backend> backend_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::condition_variable idle_cv_;
  std::map<std::string, Job> jobs_;
  std::deque<std::string> queue_;
  int running_ = 0;
  bool stopping_ = false;
  std::vector<std::thread> workers_;
  std::mt19937_64 id_rng_;
};

/// Registers /api/generate, /api/generate/{id} and /api/health plus CORS handling.
void register_routes(httplib::Server& server, GenerationService& service);

/// Blocking HTTP server on cfg.host:cfg.port; port 0 picks a free port and
/// reports it through on_bound.
void serve(GenerationService& service, const std::function<void(int port)>& on_bound = {});

}  // namespace terra::service
