#include "cli.hpp"

#include <CLI11.hpp>

#include <ostream>

#include "crashscene/editor_server.hpp"
#include "crashscene/errors.hpp"
#include "crashscene/io.hpp"
#include "crashscene/metrics.hpp"
#include "crashscene/pipeline.hpp"

namespace crashscene::cli {

namespace {

namespace fs = std::filesystem;

struct ExtractArgs {
  std::vector<std::string> inputs;
  std::string output;
  std::string config;
  int workers = 0;
  bool quiet = false;
};

struct SynthArgs {
  std::string script;
  std::string output;
  double focal = pipeline::kDatasetFocal;
};

struct EvalArgs {
  std::string gt;
  std::string est;
  double threshold = 3.0;
  std::string odometry;
  std::string report;
  std::string json;
  std::string sequence = "SEQ";
};

struct ServeArgs {
  std::string scenario;
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string assets;
  double min_gap = 6.0;
};

int extract(const ExtractArgs& a, std::ostream& err) {
  pipeline::PipelineConfig config = a.config.empty() ? pipeline::PipelineConfig{} : pipeline::load_config(a.config);
  if (a.workers > 0) config.workers = a.workers;
  if (a.inputs.size() == 1) {
    const auto r = pipeline::run_pipeline(a.inputs[0], config, a.output);
    if (!a.quiet) {
      for (const auto& line : r.diagnostics) err << line << "\n";
    }
    err << "wrote " << a.output << ": ego + " << r.agents.size() << " vehicles\n";
    return 0;
  }
  // Batch: one <output>/<input name>.json per scene.
  std::vector<pipeline::BatchJob> jobs;
  for (const auto& in : a.inputs) {
    const fs::path p = fs::path(in).lexically_normal();
    const std::string name = (p.has_filename() ? p.filename() : p.parent_path().filename()).string();
    jobs.push_back({p, fs::path(a.output) / (name + ".json")});
  }
  fs::create_directories(a.output);
  const auto errors = pipeline::run_batch(jobs, config);
  int failed = 0;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    if (errors[i].empty()) {
      err << "wrote " << jobs[i].output_path.string() << "\n";
    } else {
      ++failed;
      err << "failed " << errors[i] << "\n";
    }
  }
  return failed ? 1 : 0;
}

int synth(const SynthArgs& a, std::ostream& err) {
  const pipeline::SceneScript script = pipeline::load_scene_script(a.script);
  const auto intr = camera::CameraIntrinsics::centered(a.focal, script.image);
  const auto r = pipeline::generate_synthetic(script, intr, a.output);
  err << "wrote " << script.frames << " frames, " << r.detections << " detections to " << a.output << "\n";
  return 0;
}

int eval(const EvalArgs& a, std::ostream& out) {
  std::vector<metrics::TrackPoint> gt = metrics::read_tracks_csv(a.gt);
  const std::vector<metrics::TrackPoint> est = metrics::read_tracks_csv(a.est);
  if (!a.odometry.empty()) gt = metrics::absolutize_ground_truth(gt, io::read_odometry_csv(a.odometry));
  metrics::EvaluateOptions options;
  options.match_threshold = a.threshold;
  const metrics::MetricsReport report = metrics::evaluate(gt, est, options);
  const std::string text = metrics::format_report(report, a.sequence);
  out << text;
  if (!a.report.empty()) io::write_text(a.report, text);
  if (!a.json.empty()) io::write_text(a.json, metrics::report_to_json(report).dump(2) + "\n");
  return 0;
}

int serve(const ServeArgs& a, std::ostream& err) {
  editor::EditorService service(a.scenario, a.min_gap);
  std::optional<fs::path> assets;
  if (!a.assets.empty()) assets = a.assets;
  editor::EditorServer server(service, assets);
  const int port = server.bind(a.host, a.port);
  err << "serving " << a.scenario << " at http://" << a.host << ":" << port << "/" << std::endl;
  server.listen();
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Dashcam perception to crash scenario toolkit"};
  app.require_subcommand(1);

  ExtractArgs ex;
  auto* extract_cmd = app.add_subcommand("extract", "Build a scenario from a scene input directory");
  extract_cmd->add_option("inputs", ex.inputs, "Scene input directories")->required()->check(CLI::ExistingDirectory);
  extract_cmd->add_option("-o,--output", ex.output, "Scenario file (one input) or output directory (several)")
      ->required();
  extract_cmd->add_option("-c,--config", ex.config, "key = value config file")->check(CLI::ExistingFile);
  extract_cmd->add_option("-j,--workers", ex.workers, "Parallel scenes (overrides the config)")
      ->check(CLI::PositiveNumber);
  extract_cmd->add_flag("-q,--quiet", ex.quiet, "Do not echo diagnostics to stderr");

  SynthArgs sy;
  auto* synth_cmd = app.add_subcommand("synth", "Render a synthetic scene from a JSON script");
  synth_cmd->add_option("script", sy.script, "Scene script (JSON)")->required()->check(CLI::ExistingFile);
  synth_cmd->add_option("-o,--output", sy.output, "Output scene directory")->required();
  synth_cmd->add_option("-f,--focal", sy.focal, "Focal length in pixels; principal point at the image center")
      ->check(CLI::PositiveNumber);

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "CLEAR-MOT evaluation of estimated tracks");
  eval_cmd->add_option("gt", ev.gt, "Ground truth CSV (frame,object_id,x,y)")->required();
  eval_cmd->add_option("est", ev.est, "Estimated tracks CSV")->required();
  eval_cmd->add_option("-t,--threshold", ev.threshold, "Match distance threshold in meters")
      ->check(CLI::PositiveNumber);
  eval_cmd->add_option("--odometry", ev.odometry, "Make ego-relative ground truth absolute with this odometry CSV");
  eval_cmd->add_option("-o,--output", ev.report, "Also write the report here");
  eval_cmd->add_option("--json", ev.json, "Write the metrics as JSON");
  eval_cmd->add_option("--sequence", ev.sequence, "Sequence name in the report");

  ServeArgs se;
  auto* serve_cmd = app.add_subcommand("serve", "Serve a scenario file to the waypoint editor");
  serve_cmd->add_option("scenario", se.scenario, "Scenario JSON file")->required();
  serve_cmd->add_option("-p,--port", se.port, "TCP port (0 picks a free one)")->check(CLI::Range(0, 65535));
  serve_cmd->add_option("--host", se.host, "Listen address");
  serve_cmd->add_option("--assets", se.assets, "Editor static assets directory, mounted at /");
  serve_cmd->add_option("--min-gap", se.min_gap, "Overlap distance for POST /check in meters")
      ->check(CLI::PositiveNumber);

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    // Reports go to stdout; diagnostics and status lines to stderr.
    if (*extract_cmd) return extract(ex, err);
    if (*synth_cmd) return synth(sy, err);
    if (*eval_cmd) return eval(ev, out);
    return serve(se, err);
  } catch (const UndefinedMetricsError& e) {
    err << "error: undefined metrics: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace crashscene::cli
