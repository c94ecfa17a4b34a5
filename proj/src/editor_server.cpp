#include "crashscene/editor_server.hpp"

#include <httplib.h>

#include <json.hpp>

#include "crashscene/errors.hpp"
#include "crashscene/io.hpp"

namespace crashscene::editor {

namespace {

Response json_response(int status, const nlohmann::json& body) { return {status, body.dump(2) + "\n"}; }

Response violations_response(const std::vector<std::string>& violations) {
  return json_response(422, {{"violations", violations}});
}

}  // namespace

EditorService::EditorService(fs::path scenario_path, double min_gap)
    : path_(std::move(scenario_path)), min_gap_(min_gap) {
  if (!(min_gap_ > 0.0)) throw ParameterError("min_gap must be positive");
  text_ = io::read_text(path_);
  try {
    spec_ = scenario::parse_scenario(text_);
  } catch (const FormatError& e) {
    throw FormatError(path_.string() + ": " + e.what());
  }
  const auto violations = scenario::validate_scenario(spec_);
  if (!violations.empty()) {
    std::string msg = path_.string() + ": scenario is invalid:";
    for (const auto& v : violations) msg += "\n  " + v;
    throw ValidationError(msg);
  }
}

Response EditorService::get_scenario() const {
  std::lock_guard lock(mu_);
  return {200, text_};
}

Response EditorService::put_scenario(const std::string& body) {
  std::lock_guard lock(mu_);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(body);
  } catch (const nlohmann::json::parse_error& e) {
    return json_response(400, {{"error", std::string("body is not valid JSON: ") + e.what()}});
  }
  scenario::ScenarioSpec spec;
  try {
    spec = scenario::scenario_from_json(doc);
  } catch (const FormatError& e) {
    return violations_response({e.what()});
  }
  const auto violations = scenario::validate_scenario(spec);
  if (!violations.empty()) return violations_response(violations);
  std::string text = scenario::to_canonical_json(spec);
  try {
    scenario::write_file_atomic(path_, text);
  } catch (const IoError& e) {
    return json_response(500, {{"error", e.what()}});
  }
  text_ = std::move(text);
  spec_ = std::move(spec);
  return {200, text_};
}

Response EditorService::check(const std::string& body) const {
  std::lock_guard lock(mu_);
  scenario::ScenarioSpec parsed;
  const scenario::ScenarioSpec* spec = &spec_;
  if (body.find_first_not_of(" \t\r\n") != std::string::npos) {
    try {
      parsed = scenario::parse_scenario(body);
    } catch (const FormatError& e) {
      return violations_response({e.what()});
    }
    spec = &parsed;
  }
  nlohmann::json conflicts = nlohmann::json::array();
  for (const auto& c : scenario::check_overlaps(*spec, min_gap_)) {
    conflicts.push_back({{"id_a", c.id_a}, {"id_b", c.id_b}, {"distance", c.distance}});
  }
  return json_response(200, {{"conflicts", conflicts}, {"min_gap", min_gap_}});
}

struct EditorServer::Impl {
  EditorService& service;
  httplib::Server server;
  int port = -1;

  explicit Impl(EditorService& s) : service(s) {}
};

EditorServer::EditorServer(EditorService& service, std::optional<fs::path> assets_dir)
    : impl_(std::make_unique<Impl>(service)) {
  auto& svr = impl_->server;
  // SO_REUSEADDR only: the library default also sets SO_REUSEPORT, which
  // would let a second server share a busy port.
  svr.set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const char*>(&yes), sizeof(yes));
  });
  auto reply = [](httplib::Response& res, const Response& r) {
    res.status = r.status;
    res.set_content(r.body, r.content_type);
  };
  EditorService& svc = impl_->service;
  svr.Get("/scenario", [&svc, reply](const httplib::Request&, httplib::Response& res) {
    reply(res, svc.get_scenario());
  });
  svr.Put("/scenario", [&svc, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, svc.put_scenario(req.body));
  });
  svr.Post("/check", [&svc, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, svc.check(req.body));
  });
  if (assets_dir) {
    if (!fs::is_directory(*assets_dir)) throw IoError(assets_dir->string() + ": assets directory not found");
    svr.set_mount_point("/", assets_dir->string());
  }
}

EditorServer::~EditorServer() { stop(); }

int EditorServer::bind(const std::string& host, int port) {
  auto& svr = impl_->server;
  const int bound = port == 0 ? svr.bind_to_any_port(host) : (svr.bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw IoError("cannot listen on " + host + ":" + std::to_string(port) + " (port busy?)");
  impl_->port = bound;
  return bound;
}

void EditorServer::listen() {
  if (impl_->port < 0) throw ParameterError("bind() must precede listen()");
  impl_->server.listen_after_bind();
}

void EditorServer::stop() {
  if (impl_->server.is_running()) impl_->server.stop();
}

}  // namespace crashscene::editor
