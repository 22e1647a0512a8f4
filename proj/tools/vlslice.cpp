#include <filesystem>
#include <csignal>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <httplib.h>
#include <json.hpp>

#include "vlslice/api.hpp"
#include "vlslice/config.hpp"
#include "vlslice/embedding_store.hpp"
#include "vlslice/eval_harness.hpp"
#include "vlslice/prep_geometry.hpp"
#include "vlslice/session.hpp"
#include "vlslice/synthetic.hpp"
#include "vlslice/text_encoder.hpp"

namespace {

using nlohmann::json;
using namespace vlslice;

httplib::Server* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::not_found, "cannot open '" + path + "'", path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json read_json(const std::string& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    fail(ErrorCode::format, "'" + path + "' is not valid JSON: " + e.what(), path);
  }
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorCode::invalid_argument, "cannot write '" + path + "'", path);
  out << text;
}

int run_serve(const std::string& config_path) {
  const auto cfg = load_config(config_path);
  auto corpus = std::make_shared<const Corpus>(load_corpus(cfg.corpus, cfg.manifest));
  std::shared_ptr<TextEncoder> encoder =
      make_text_encoder(cfg.provider, std::chrono::milliseconds(cfg.provider_timeout_ms));
  SessionDefaults defaults;
  defaults.k = cfg.k;
  defaults.clustering = cfg.clustering;
  defaults.histogram_bins = cfg.histogram_bins;
  Clock clock = system_clock();
  if (cfg.fixed_clock_ms) clock = [t = *cfg.fixed_clock_ms] { return t; };
  SessionStore store(corpus, encoder, defaults, clock);

  httplib::Server server;
  api::register_routes(server, store);
  g_server = &server;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::cerr << "vlslice: " << corpus->matrix.count() << " images (dim " << corpus->matrix.dim() << "), listening on "
            << cfg.host << ":" << cfg.port << "\n";
  if (!server.listen(cfg.host, cfg.port)) {
    std::cerr << "vlslice: cannot bind " << cfg.host << ":" << cfg.port << "\n";
    return 1;
  }
  return 0;
}

int run_ingest_check(const std::string& vlsl, const std::string& manifest) {
  const auto corpus = load_corpus(vlsl, manifest);
  double worst = 0.0;
  for (std::size_t r = 0; r < corpus.matrix.count(); ++r) {
    worst = std::max(worst, std::abs(std::sqrt(dot(corpus.matrix.row(r), corpus.matrix.row(r))) - 1.0));
  }
  std::cout << json{{"status", "ok"},
                    {"count", corpus.matrix.count()},
                    {"dim", corpus.matrix.dim()},
                    {"max_norm_error", worst}}
                   .dump(2)
            << "\n";
  return 0;
}

int run_export(const std::string& server_url, const std::string& session_id, const std::string& input,
               const std::string& out) {
  std::string text;
  if (!input.empty()) {
    text = read_text(input);
  } else {
    httplib::Client client(server_url);
    auto res = client.Get("/sessions/" + session_id + "/snapshot");
    if (!res) fail(ErrorCode::unavailable, "cannot reach " + server_url + ": " + httplib::to_string(res.error()));
    if (res->status != 200) fail(ErrorCode::not_found, "server answered " + std::to_string(res->status) + ": " + res->body);
    text = res->body;
  }
  write_text(out, snapshot_to_string(import_snapshot(text)));
  return 0;
}

int run_make_tasks(const std::string& snapshot_path, const std::string& vlsl, const std::string& manifest,
                   const std::string& kind, std::uint64_t seed, const std::string& out) {
  const auto snap = import_snapshot(read_text(snapshot_path));
  const auto corpus = load_corpus(vlsl, manifest);
  check_against_corpus(snap, corpus.matrix);
  if (kind == "coherency") {
    const auto tasks = make_coherency_tasks(snap, corpus.matrix, seed);
    write_text(out, tasks_to_string<CoherencyTask>(kind, seed, tasks));
  } else if (kind == "representativeness") {
    const auto tasks = make_representativeness_tasks(snap, corpus.matrix, seed);
    write_text(out, tasks_to_string<RepresentativenessTask>(kind, seed, tasks));
  } else {
    fail(ErrorCode::invalid_argument, "unknown task kind '" + kind + "'", kind);
  }
  return 0;
}

int run_score(const std::string& tasks_path, const std::string& answers_path) {
  const auto tasks = coherency_tasks_from_json(read_json(tasks_path));
  const auto selections = selections_for(tasks, read_json(answers_path));
  std::cout << score_to_json(score_coherency(tasks, selections)).dump(2) << "\n";
  return 0;
}

int run_prep_boxes(const std::string& boxes_path, const std::string& hierarchy_path, std::vector<int> pad,
                   double iou_threshold, const std::string& out) {
  std::vector<prep::BoxRecord> boxes;
  std::ifstream in(boxes_path);
  if (!in) fail(ErrorCode::not_found, "cannot open '" + boxes_path + "'", boxes_path);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      boxes.push_back(json::parse(line).get<prep::BoxRecord>());
    } catch (const json::exception& e) {
      fail(ErrorCode::format, "boxes line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  prep::ClassHierarchy hierarchy;
  if (!hierarchy_path.empty()) hierarchy = read_json(hierarchy_path).get<prep::ClassHierarchy>();
  if (pad.size() != 3) fail(ErrorCode::invalid_argument, "--pad expects three values r g b");
  prep::Rgb color{};
  for (std::size_t i = 0; i < 3; ++i) {
    if (pad[i] < 0 || pad[i] > 255) fail(ErrorCode::invalid_argument, "--pad values must lie in [0, 255]");
    color[i] = static_cast<std::uint8_t>(pad[i]);
  }
  std::ostringstream lines;
  for (const auto& d : prep::prepare_crops(boxes, hierarchy, color, iou_threshold)) lines << json(d).dump() << "\n";
  write_text(out, lines.str());
  return 0;
}

int run_synth(const std::string& dir, std::uint64_t seed, std::size_t subjects, std::size_t distractors,
              std::size_t dim) {
  synthetic::Options opt;
  opt.seed = seed;
  opt.subjects = subjects;
  opt.distractors = distractors;
  opt.dim = dim;
  const auto ds = synthetic::generate(opt);
  std::filesystem::create_directories(dir);
  write_embeddings(dir + "/corpus.vlsl", ds.corpus.matrix);
  write_manifest(dir + "/manifest.jsonl", ds.corpus.records);
  write_text(dir + "/fixture.json", json(ds.captions).dump() + "\n");
  const json cfg{{"corpus", dir + "/corpus.vlsl"},
                 {"manifest", dir + "/manifest.jsonl"},
                 {"provider", dir + "/fixture.json"},
                 {"k", subjects},
                 {"a", 0.95},
                 {"dt", 0.2},
                 {"host", "127.0.0.1"},
                 {"port", 8080}};
  write_text(dir + "/config.json", cfg.dump(2) + "\n");
  std::cout << "wrote " << ds.corpus.matrix.count() << " embeddings to " << dir << "\n"
            << "captions: \"" << ds.baseline << "\" / \"" << ds.augmented << "\", search: \"" << ds.concept_text
            << "\"\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vlslice: interactive slice discovery for image-text alignment models"};
  app.require_subcommand(1);

  std::string config_path;
  auto* serve = app.add_subcommand("serve", "Run the HTTP API");
  serve->add_option("-c,--config", config_path, "JSON config file (VLSLICE_* env vars override)");

  std::string vlsl, manifest;
  auto* ingest = app.add_subcommand("ingest-check", "Validate a VLSL corpus and its manifest");
  ingest->add_option("--corpus", vlsl, "VLSL embedding file")->required();
  ingest->add_option("--manifest", manifest, "JSON-lines manifest")->required();

  std::string server_url = "http://127.0.0.1:8080", session_id, snapshot_in, out;
  auto* exporter = app.add_subcommand("export", "Fetch (or re-validate) a session snapshot as canonical JSON");
  exporter->add_option("--server", server_url, "Base URL of a running server");
  exporter->add_option("--session", session_id, "Session id to export");
  exporter->add_option("--snapshot", snapshot_in, "Existing snapshot file to validate and canonicalize");
  exporter->add_option("-o,--out", out, "Output path (stdout if omitted)");

  std::string snapshot_path, kind = "coherency";
  std::uint64_t seed = 0;
  auto* tasks = app.add_subcommand("make-tasks", "Generate annotation tasks from a snapshot");
  tasks->add_option("--snapshot", snapshot_path, "Snapshot JSON")->required();
  tasks->add_option("--corpus", vlsl, "VLSL embedding file")->required();
  tasks->add_option("--manifest", manifest, "JSON-lines manifest")->required();
  tasks->add_option("--kind", kind, "coherency | representativeness")->check(CLI::IsMember({"coherency", "representativeness"}));
  tasks->add_option("--seed", seed, "Sampling seed");
  tasks->add_option("-o,--out", out, "Output path (stdout if omitted)");

  std::string tasks_path, answers_path;
  auto* score = app.add_subcommand("score", "Micro-averaged F1 of coherency answers");
  score->add_option("--tasks", tasks_path, "Coherency task file")->required();
  score->add_option("--answers", answers_path, "Annotator answers file")->required();

  std::string boxes_path, hierarchy_path;
  std::vector<int> pad{0, 0, 0};
  double iou_threshold = prep::kDefaultIouThreshold;
  auto* prep_cmd = app.add_subcommand("prep-boxes", "Turn annotated boxes into square crop directives");
  prep_cmd->add_option("--boxes", boxes_path, "JSON-lines BoxRecord input")->required();
  prep_cmd->add_option("--hierarchy", hierarchy_path, "JSON object child class -> parent class");
  prep_cmd->add_option("--pad", pad, "Dataset mean RGB used for border padding")->expected(3);
  prep_cmd->add_option("--iou", iou_threshold, "NMS IoU threshold");
  prep_cmd->add_option("-o,--out", out, "Output path (stdout if omitted)");

  std::string dir = ".";
  std::size_t subjects = 1000, distractors = 1000, dim = 32;
  std::uint64_t synth_seed = 7;
  auto* synth = app.add_subcommand("synth", "Write a synthetic corpus, text fixture and config");
  synth->add_option("--out-dir", dir, "Output directory (created if missing)");
  synth->add_option("--seed", synth_seed, "Generator seed");
  synth->add_option("--subjects", subjects, "Images aligned with the baseline caption");
  synth->add_option("--distractors", distractors, "Unrelated images");
  synth->add_option("--dim", dim, "Embedding dimension (>= 3)")->check(CLI::Range(3, 4096));

  CLI11_PARSE(app, argc, argv);

  try {
    if (*serve) return run_serve(config_path);
    if (*ingest) return run_ingest_check(vlsl, manifest);
    if (*exporter) {
      if (snapshot_in.empty() && session_id.empty()) {
        std::cerr << "export: pass --session (with --server) or --snapshot\n";
        return 2;
      }
      return run_export(server_url, session_id, snapshot_in, out);
    }
    if (*tasks) return run_make_tasks(snapshot_path, vlsl, manifest, kind, seed, out);
    if (*score) return run_score(tasks_path, answers_path);
    if (*prep_cmd) return run_prep_boxes(boxes_path, hierarchy_path, pad, iou_threshold, out);
    if (*synth) return run_synth(dir, synth_seed, subjects, distractors, dim);
  } catch (const Error& e) {
    std::cerr << "vlslice: " << to_string(e.code()) << ": " << e.what() << "\n";
    return 1;
  }
  return 0;
}
