#pragma once

#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include "crashscene/scenario_synth.hpp"

namespace crashscene::editor {

namespace fs = std::filesystem;

struct Response {
  int status = 200;
  std::string body;
  std::string content_type = "application/json";
};

// Scenario file behind the editor endpoints. All calls serialize on one
// mutex, so a PUT is never interleaved with another request.
class EditorService {
 public:
  // Loads and validates the file. Throws IoError, FormatError or
  // ValidationError.
  explicit EditorService(fs::path scenario_path, double min_gap = 6.0);

  // Current scenario text; byte-identical to the file.
  Response get_scenario() const;
  // Replaces the scenario when the body parses and passes every invariant;
  // writes canonical JSON atomically. 400 for non-JSON bodies, 422 with
  // {"violations": [...]} otherwise.
  Response put_scenario(const std::string& body);
  // Overlap conflicts of the body scenario, or of the current one when the
  // body is empty: {"conflicts": [{"id_a", "id_b", "distance"}], "min_gap"}.
  Response check(const std::string& body) const;

 private:
  fs::path path_;
  double min_gap_;
  mutable std::mutex mu_;
  std::string text_;
  scenario::ScenarioSpec spec_;
};

// HTTP front end: GET /scenario, PUT /scenario, POST /check, plus static
// editor assets mounted at / when a directory is given.
class EditorServer {
 public:
  EditorServer(EditorService& service, std::optional<fs::path> assets_dir = std::nullopt);
  ~EditorServer();
  EditorServer(const EditorServer&) = delete;
  EditorServer& operator=(const EditorServer&) = delete;

  // Binds host:port (port 0 picks a free one) and returns the bound port.
  // Throws IoError when the port is busy.
  int bind(const std::string& host, int port);
  // Serves until stop(); call after bind().
  void listen();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace crashscene::editor
