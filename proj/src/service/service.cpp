#include "terra/service/service.hpp"

#include <random>

#include "httplib.h"
#include "terra/core/base64.hpp"
#include "terra/raster/io.hpp"

namespace terra::service {

nlohmann::json to_json(const ServiceConfig& c) {
  return {{"host", c.host},
          {"port", c.port},
          {"queue_depth", c.queue_depth},
          {"default_steps", c.default_steps},
          {"allowed_origins", c.allowed_origins}};
}

ServiceConfig service_config_from_json(const nlohmann::json& j, ServiceConfig c) {
  if (j.contains("host")) c.host = j.at("host").get<std::string>();
  if (j.contains("port")) c.port = j.at("port").get<int>();
  if (j.contains("queue_depth")) c.queue_depth = j.at("queue_depth").get<size_t>();
  if (j.contains("default_steps")) c.default_steps = j.at("default_steps").get<int>();
  if (j.contains("allowed_origins")) c.allowed_origins = j.at("allowed_origins").get<std::vector<std::string>>();
  if (c.port < 0 || c.port > 65535) throw InvalidArgument("port must lie in [0, 65535]");
  if (c.queue_depth < 1) throw InvalidArgument("queue_depth must be positive");
  if (c.default_steps < 1) throw InvalidArgument("default_steps must be positive");
  return c;
}

std::string to_string(JobState s) {
  switch (s) {
    case JobState::kQueued: return "queued";
    case JobState::kRunning: return "running";
    case JobState::kDone: return "done";
    case JobState::kFailed: return "failed";
  }
  return "unknown";
}

Backend make_backend(std::shared_ptr<const pipeline::Generator> g) {
  Backend b;
  b.resolution = g->resolution();
  b.max_steps = g->ldm.schedule.T;
  b.conditional = g->control.has_value();
  b.checkpoint_hash = g->checkpoint_hash;
  b.checkpoint_files = g->checkpoint_files;
  b.generate = [g](const JobRequest& r) {
    pipeline::SampleOptions opts;
    opts.steps = r.steps;
    return pipeline::generate(*g, 1, r.seed, opts, r.sketch).at(0);
  };
  return b;
}

GenerationService::GenerationService(ServiceConfig cfg, std::optional<Backend> backend)
    : cfg_(std::move(cfg)), backend_(std::move(backend)), id_rng_(std::random_device{}()) {}

GenerationService::~GenerationService() { stop(); }

std::string GenerationService::new_id() {
  // Version 4 UUID.
  const uint64_t a = id_rng_(), b = id_rng_();
  uint8_t bytes[16];
  for (int i = 0; i < 8; ++i) {
    bytes[i] = static_cast<uint8_t>(a >> (8 * i));
    bytes[8 + i] = static_cast<uint8_t>(b >> (8 * i));
  }
  bytes[6] = static_cast<uint8_t>((bytes[6] & 0x0f) | 0x40);
  bytes[8] = static_cast<uint8_t>((bytes[8] & 0x3f) | 0x80);
  static const char* hex = "0123456789abcdef";
  std::string s;
  for (int i = 0; i < 16; ++i) {
    if (i == 4 || i == 6 || i == 8 || i == 10) s += '-';
    s += hex[bytes[i] >> 4];
    s += hex[bytes[i] & 15];
  }
  return s;
}

namespace {

ApiResponse error(int status, const std::string& message) { return {status, {{"error", message}}}; }

}  // namespace

ApiResponse GenerationService::post_generate(const std::string& body) {
  if (!backend_) return error(503, "no model loaded");
  nlohmann::json req = nlohmann::json::object();
  if (!body.empty()) {
    try {
      req = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception&) {
      return error(400, "request body is not valid JSON");
    }
    if (!req.is_object()) return error(400, "request body must be a JSON object");
  }
  Job job;
  try {
    if (req.contains("steps") && !req["steps"].is_number_integer()) return error(400, "steps must be an integer");
    job.request.steps = req.value("steps", cfg_.default_steps);
    if (req.contains("seed") && !req["seed"].is_null()) {
      if (!req["seed"].is_number_unsigned()) return error(400, "seed must be a non-negative integer");
      job.request.seed = req["seed"].get<uint64_t>();
      job.seeded = true;
    }
  } catch (const nlohmann::json::exception&) {
    return error(400, "steps and seed must be non-negative integers");
  }
  if (job.request.steps < 1 || job.request.steps > backend_->max_steps)
    return error(400, "steps must lie in [1, " + std::to_string(backend_->max_steps) + "]");
  if (req.contains("sketch_png_base64") && !req["sketch_png_base64"].is_null()) {
    if (!req["sketch_png_base64"].is_string()) return error(400, "sketch_png_base64 must be a string");
    try {
      const auto bytes = base64_decode(req["sketch_png_base64"].get<std::string>());
      job.request.sketch = raster::decode_texture_png(bytes);
    } catch (const std::exception& e) {
      return error(400, std::string("sketch is not a decodable RGB PNG: ") + e.what());
    }
    const int r = backend_->resolution;
    if (job.request.sketch->width != r || job.request.sketch->height != r)
      return error(400, "sketch must be " + std::to_string(r) + "x" + std::to_string(r) + " pixels");
    if (!backend_->conditional) return error(400, "the loaded model has no sketch adapter");
  }

  std::lock_guard lock(mu_);
  if (queue_.size() >= cfg_.queue_depth) return error(503, "job queue is full");
  if (!job.seeded) job.request.seed = id_rng_();
  const std::string id = new_id();
  jobs_.emplace(id, std::move(job));
  queue_.push_back(id);
  cv_.notify_one();
  return {202, {{"job_id", id}}};
}

ApiResponse GenerationService::get_job(const std::string& id) const {
  std::lock_guard lock(mu_);
  const auto it = jobs_.find(id);
  if (it == jobs_.end()) return error(404, "unknown job id");
  const Job& j = it->second;
  nlohmann::json b{{"job_id", id},
                   {"state", to_string(j.state)},
                   {"steps", j.request.steps},
                   {"seed", j.request.seed},
                   {"conditional", j.request.sketch.has_value()}};
  if (j.state == JobState::kDone)
    b["result"] = {{"width", j.width},
                   {"height", j.height},
                   {"heightmap_png_base64", base64_encode(j.heightmap_png)},
                   {"texture_png_base64", base64_encode(j.texture_png)}};
  if (j.state == JobState::kFailed) b["error"] = j.error;
  return {200, b};
}

ApiResponse GenerationService::health() const {
  return {200,
          {{"model_loaded", backend_.has_value()},
           {"checkpoint_hash", backend_ ? nlohmann::json(backend_->checkpoint_hash) : nlohmann::json(nullptr)},
           {"checkpoints", backend_ ? nlohmann::json(backend_->checkpoint_files) : nlohmann::json::object()},
           {"conditional", backend_ && backend_->conditional},
           {"resolution", backend_ ? backend_->resolution : 0}}};
}

void GenerationService::execute(const std::string& id) {
  JobRequest req;
  {
    std::lock_guard lock(mu_);
    req = jobs_.at(id).request;
  }
  std::vector<uint8_t> hp, tp;
  int w = 0, h = 0;
  std::string err;
  try {
    const raster::TerrainPair pair = backend_->generate(req);
    hp = raster::encode_heightmap_png(pair.height);
    tp = raster::encode_texture_png(pair.texture);
    w = pair.height.width;
    h = pair.height.height;
  } catch (const std::exception& e) {
    err = e.what();
  }
  std::lock_guard lock(mu_);
  Job& j = jobs_.at(id);
  if (err.empty()) {
    j.heightmap_png = std::move(hp);
    j.texture_png = std::move(tp);
    j.width = w;
    j.height = h;
    j.state = JobState::kDone;
  } else {
    j.error = err;
    j.state = JobState::kFailed;
  }
  --running_;
  idle_cv_.notify_all();
}

bool GenerationService::run_one() {
  std::string id;
  {
    std::lock_guard lock(mu_);
    if (queue_.empty()) return false;
    id = queue_.front();
    queue_.pop_front();
    jobs_.at(id).state = JobState::kRunning;
    ++running_;
  }
  execute(id);
  return true;
}

void GenerationService::worker_loop() {
  for (;;) {
    std::string id;
    {
      std::unique_lock lock(mu_);
      cv_.wait(lock, [&] { return stopping_ || !queue_.empty(); });
      if (stopping_) return;
      id = queue_.front();
      queue_.pop_front();
      jobs_.at(id).state = JobState::kRunning;
      ++running_;
    }
    execute(id);
  }
}

void GenerationService::start(int workers) {
  std::lock_guard lock(mu_);
  if (!workers_.empty() || !backend_) return;
  stopping_ = false;
  for (int i = 0; i < std::max(1, workers); ++i) workers_.emplace_back([this] { worker_loop(); });
}

void GenerationService::stop() {
  {
    std::lock_guard lock(mu_);
    stopping_ = true;
  }
  cv_.notify_all();
  for (auto& t : workers_) t.join();
  workers_.clear();
}

void GenerationService::wait_idle() {
  std::unique_lock lock(mu_);
  idle_cv_.wait(lock, [&] { return queue_.empty() && running_ == 0; });
}

namespace {

void reply(httplib::Response& res, const ApiResponse& r) {
  res.status = r.status;
  res.set_content(r.body.dump(), "application/json");
}

bool origin_allowed(const ServiceConfig& cfg, const std::string& origin) {
  for (const auto& o : cfg.allowed_origins)
    if (o == "*" || o == origin) return true;
  return false;
}

}  // namespace

void register_routes(httplib::Server& server, GenerationService& service) {
  server.Post("/api/generate", [&](const httplib::Request& req, httplib::Response& res) {
    reply(res, service.post_generate(req.body));
  });
  server.Get(R"(/api/generate/([0-9a-fA-F-]+))", [&](const httplib::Request& req, httplib::Response& res) {
    reply(res, service.get_job(req.matches[1]));
  });
  server.Get("/api/health", [&](const httplib::Request&, httplib::Response& res) { reply(res, service.health()); });
  server.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) {
    res.status = 204;
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.set_header("Access-Control-Max-Age", "600");
  });
  server.set_post_routing_handler([&](const httplib::Request& req, httplib::Response& res) {
    const std::string origin = req.get_header_value("Origin");
    if (origin.empty() || !origin_allowed(service.config(), origin)) return;
    const bool any = std::find(service.config().allowed_origins.begin(), service.config().allowed_origins.end(),
                               "*") != service.config().allowed_origins.end();
    res.set_header("Access-Control-Allow-Origin", any ? "*" : origin);
    if (!any) res.set_header("Vary", "Origin");
  });
}

void serve(GenerationService& service, const std::function<void(int)>& on_bound) {
  httplib::Server server;
  register_routes(server, service);
  const auto& cfg = service.config();
  int port = cfg.port;
  if (port == 0) {
    port = server.bind_to_any_port(cfg.host);
  } else if (!server.bind_to_port(cfg.host, port)) {
    port = -1;
  }
  if (port < 0) throw InvalidArgument("cannot bind " + cfg.host + ":" + std::to_string(cfg.port));
  if (on_bound) on_bound(port);
  server.listen_after_bind();
}

}  // namespace terra::service
