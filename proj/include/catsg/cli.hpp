// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "catsg/downstream.hpp"
#include "catsg/errors.hpp"
#include "catsg/hash.hpp"
#include "catsg/ontology.hpp"
#include "catsg/queries.hpp"
#include "catsg/relnet.hpp"
#include "catsg/scenegraph.hpp"
#include "catsg/synthdata.hpp"

namespace catsg::cli {

/// Process exit codes.
enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kUsage = 2,  // bad flags or configuration
  kIo = 3,     // unreadable, unwritable or malformed files
  kFingerprint = 4,
};

inline int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const FingerprintMismatch*>(&e)) return kFingerprint;
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const InvalidWindow*>(&e) ||
      dynamic_cast<const UnknownClass*>(&e) || dynamic_cast<const EmptySplit*>(&e))
    return kUsage;
  if (dynamic_cast<const IoError*>(&e) || dynamic_cast<const SchemaError*>(&e) ||
      dynamic_cast<const MissingFrame*>(&e) || dynamic_cast<const DimensionMismatch*>(&e) ||
      dynamic_cast<const nlohmann::json::exception*>(&e) ||
      dynamic_cast<const std::filesystem::filesystem_error*>(&e))
    return kIo;
  return kFailure;
}

/// Everything a command needs, resolved before any stage runs and saved as
/// config.json in the run directory.
struct RunConfig {
  std::string command;
  std::string ontology = "default";
  std::string data;
  std::string graphs;
  std::string checkpoint;
  std::string queries;
  std::string split = "test";
  double test_fraction = 0.2;
  SimConfig sim;
  TrainConfig train;
  TaskConfig task;

  /// The sections a command depends on; hashed to name its run directory.
  nlohmann::ordered_json snapshot(const Ontology& onto) const {
    nlohmann::ordered_json j;
    j["command"] = command;
    j["ontology"] = ontology;
    j["ontology_fingerprint"] = onto.fingerprint_hex();
    if (command == "generate") {
      j["sim"] = nlohmann::json(sim);
      return j;
    }
    j["data"] = data;
    if (!queries.empty()) j["queries"] = queries;
    if (command == "train-rel") {
      j["test_fraction"] = test_fraction;
      j["train"] = nlohmann::json(train);
    } else if (command == "eval-rel") {
      j["checkpoint"] = checkpoint;
      j["split"] = split;
      j["variant"] = train.variant;
    } else if (command == "train-task") {
      if (!graphs.empty()) j["graphs"] = graphs;
      j["task"] = nlohmann::json(task);
    } else if (command == "eval-task") {
      if (!graphs.empty()) j["graphs"] = graphs;
      j["checkpoint"] = checkpoint;
      j["split"] = split;
      j["task"] = nlohmann::json(task);
    }
    return j;
  }
};

namespace detail {

inline std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot open " + p.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + p.string());
  out << text;
  if (!out) throw IoError("write failed: " + p.string());
}

inline nlohmann::json read_json(const std::filesystem::path& p) {
  try {
    return nlohmann::json::parse(read_text(p));
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError(p.string() + ": " + e.what());
  }
}

/// Creates `<root>/<command>-<hash>`; an existing directory is never
/// reused, later runs get a numeric suffix.
inline std::filesystem::path make_run_dir(const std::filesystem::path& root,
                                          const std::string& command,
                                          const nlohmann::ordered_json& snapshot) {
  const std::string base = command + "-" + hex64(fnv1a64(snapshot.dump())).substr(0, 12);
  std::error_code ec;
  std::filesystem::create_directories(root, ec);
  if (ec) throw IoError("cannot create " + root.string() + ": " + ec.message());
  for (int n = 1;; ++n) {
    const auto dir = root / (n == 1 ? base : base + "." + std::to_string(n));
    if (std::filesystem::create_directory(dir, ec)) return dir;
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  }
}

inline Ontology load_ontology_arg(const std::string& arg) {
  return arg.empty() || arg == "default" ? Ontology::default_instance() : load_ontology(arg);
}

/// Synthetic provider from the dataset's generation config, or an external
/// queries file when one is given.
inline std::unique_ptr<QueryProvider> make_provider(const RunConfig& rc,
                                                    const std::filesystem::path& data,
                                                    const Ontology& onto, SimConfig* sim_out) {
  SimConfig sim = rc.sim;
  const auto cfg_path = data / "config.json";
  if (std::filesystem::exists(cfg_path)) {
    const auto j = read_json(cfg_path);
    if (j.contains("sim")) sim = j.at("sim").get<SimConfig>();
  } else if (rc.queries.empty()) {
    throw ConfigError(data.string() + " has no config.json; pass --queries for external features");
  }
  if (sim_out) *sim_out = sim;
  if (!rc.queries.empty())
    return std::make_unique<ExternalQueryProvider>(load_external_queries(rc.queries, sim.dim));
  return std::make_unique<SyntheticQueryProvider>(sim, onto);
}

inline std::string data_dir(const RunConfig& rc) {
  if (rc.data.empty()) throw ConfigError("no dataset: pass --data or set CATSG_DATA_DIR");
  return rc.data;
}

inline std::vector<VideoRecord> pick_split(const std::vector<VideoRecord>& videos,
                                           const std::string& which, const VideoSplit& split) {
  if (which == "all") return videos;
  if (which == "test") return select_videos(videos, split.test);
  if (which == "train") return select_videos(videos, split.train);
  throw ConfigError("unknown split `" + which + "` (train, test, all)");
}

inline VideoSplit split_from_json(const nlohmann::json& j) {
  VideoSplit s;
  s.train = j.at("train").get<std::vector<std::string>>();
  s.test = j.at("test").get<std::vector<std::string>>();
  assert_disjoint(s);
  return s;
}

inline nlohmann::ordered_json split_to_json(const VideoSplit& s) {
  nlohmann::ordered_json j;
  j["train"] = s.train;
  j["test"] = s.test;
  return j;
}

inline void merge_config_file(RunConfig& rc, const std::string& path) {
  if (path.empty()) return;
  const auto j = read_json(path);
  try {
    if (j.contains("sim")) rc.sim = j.at("sim").get<SimConfig>();
    if (j.contains("train")) rc.train = j.at("train").get<TrainConfig>();
    if (j.contains("task")) rc.task = j.at("task").get<TaskConfig>();
    if (j.contains("test_fraction")) rc.test_fraction = j.at("test_fraction").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Commands. Each returns the run directory it wrote, when it wrote one.

inline std::filesystem::path cmd_generate(const RunConfig& rc, const std::filesystem::path& out_root,
                                          std::ostream& out) {
  const Ontology onto = detail::load_ontology_arg(rc.ontology);
  rc.sim.validate(onto);
  const auto snap = rc.snapshot(onto);
  const auto videos = generate(rc.sim, onto);
  const auto dir = detail::make_run_dir(out_root, "generate", snap);
  save_dataset(dir, videos, dataset_meta(rc.sim));
  detail::write_text(dir / "stats.json", dataset_stats(videos, onto).to_json().dump(2) + "\n");
  detail::write_text(dir / "config.json", snap.dump(2) + "\n");
  out << dir.string() << '\n';
  return dir;
}

inline void cmd_stats(const RunConfig& rc, std::ostream& out) {
  const Ontology onto = detail::load_ontology_arg(rc.ontology);
  out << dataset_stats(load_dataset(detail::data_dir(rc), onto), onto).to_json().dump(2) << '\n';
}

inline std::filesystem::path cmd_train_rel(const RunConfig& rc, const std::filesystem::path& out_root,
                                           std::ostream& out, std::ostream& err) {
  const Ontology onto = detail::load_ontology_arg(rc.ontology);
  rc.train.validate();
  const auto data = detail::data_dir(rc);
  const auto videos = load_dataset(data, onto);
  SimConfig sim;
  const auto provider = detail::make_provider(rc, data, onto, &sim);
  const VideoSplit split = split_videos(videos, rc.test_fraction, rc.train.seed);
  const auto train_videos = select_videos(videos, split.train);
  auto snap = rc.snapshot(onto);
  snap["split"] = detail::split_to_json(split);
  const auto dir = detail::make_run_dir(out_root, "train-rel", snap);
  detail::write_text(dir / "config.json", snap.dump(2) + "\n");

  RelHeads<double> heads(rc.train.heads_config(provider->dim()));
  heads.init(rc.train.seed);
  const TrainingLog log = train(heads, *provider, train_videos, rc.train, onto);
  for (const auto& w : log.warnings) err << "warning: " << w << '\n';
  detail::write_text(dir / "train_log.jsonl", log.to_jsonl());
  nlohmann::json extra;
  extra["variant"] = rc.train.variant;
  extra["chunk_size"] = rc.train.chunk_size;
  extra["close_to_gap"] = sim.close_to_gap;
  extra["split"] = detail::split_to_json(split);
  extra["train"] = rc.train;
  save_rel_heads(dir / "heads.ckpt", heads, onto, extra);
  out << dir.string() << '\n';
  return dir;
}

inline std::filesystem::path cmd_eval_rel(const RunConfig& rc, const std::filesystem::path& out_root,
                                          std::optional<Variant> variant, std::ostream& out) {
  const Ontology onto = detail::load_ontology_arg(rc.ontology);
  if (rc.checkpoint.empty()) throw ConfigError("eval-rel needs --checkpoint");
  nlohmann::json header;
  const RelHeads<double> heads = load_rel_heads<double>(rc.checkpoint, onto, &header);
  const auto data = detail::data_dir(rc);
  const auto videos = load_dataset(data, onto);
  const auto provider = detail::make_provider(rc, data, onto, nullptr);
  if (provider->dim() != heads.config().dim)
    throw DimensionMismatch("checkpoint expects query dim " + std::to_string(heads.config().dim) +
                            ", dataset provides " + std::to_string(provider->dim()));
  RunConfig eff = rc;
  eff.train.variant = variant ? *variant : header.at("variant").get<Variant>();
  const int chunk = header.value("chunk_size", 8);
  const int gap = header.value("close_to_gap", 0);
  const auto subset = detail::pick_split(videos, rc.split, detail::split_from_json(header.at("split")));

  const auto res = evaluate_relnet(heads, *provider, subset, eff.train.variant, chunk, gap, onto);
  const auto snap = eff.snapshot(onto);
  const auto dir = detail::make_run_dir(out_root, "eval-rel", snap);
  detail::write_text(dir / "config.json", snap.dump(2) + "\n");
  auto report = res.report.to_json();
  report["variant"] = variant_name(eff.train.variant);
  report["gate"] = {{"pairs", res.gate.pairs},
                    {"gate_open", res.gate.gate_open},
                    {"classifier_runs", res.gate.classifier_runs},
                    {"classifier_runs_below_gate", res.gate.classifier_runs_below_gate},
                    {"labels_below_gate", res.gate.labels_below_gate}};
  detail::write_text(dir / "report.json", report.dump(2) + "\n");
  detail::write_text(dir / "report.txt", res.report.to_table());

  // Predicted graphs as a dataset, usable by train-task --graphs.
  std::vector<VideoRecord> predicted;
  std::size_t at = 0;
  for (const auto& v : subset) {
    VideoRecord p = v;
    for (auto& f : p.frames) f = res.predictions[at++];
    predicted.push_back(std::move(p));
  }
  const auto meta = read_manifest(data);
  save_dataset(dir / "graphs", predicted, meta);
  out << res.report.to_table() << dir.string() << '\n';
  return dir;
}

inline std::vector<VideoRecord> task_source(const RunConfig& rc, const Ontology& onto) {
  return load_dataset(rc.graphs.empty() ? detail::data_dir(rc) : rc.graphs, onto);
}

inline std::filesystem::path cmd_train_task(const RunConfig& rc, const std::filesystem::path& out_root,
                                            std::ostream& out, std::ostream& err) {
  const Ontology onto = detail::load_ontology_arg(rc.ontology);
  rc.task.validate();
  const auto videos = task_source(rc, onto);
  const VideoSplit split = split_videos(videos, rc.task.test_fraction, rc.task.seed);
  auto snap = rc.snapshot(onto);
  snap["split"] = detail::split_to_json(split);
  const auto dir = detail::make_run_dir(out_root, "train-task", snap);
  detail::write_text(dir / "config.json", snap.dump(2) + "\n");
  auto res = train_task(select_videos(videos, split.train), rc.task, onto);
  for (const auto& e : res.log.epochs)
    err << "epoch " << e.epoch << " loss " << e.loss << " train_acc " << e.train_accuracy << '\n';
  detail::write_text(dir / "train_log.jsonl", res.log.to_jsonl());
  save_graph_classifier(dir / "model.ckpt", res.model, rc.task, onto);
  detail::write_text(dir / "split.json", detail::split_to_json(split).dump(2) + "\n");
  out << dir.string() << '\n';
  return dir;
}

inline std::filesystem::path cmd_eval_task(const RunConfig& rc, const std::filesystem::path& out_root,
                                           std::ostream& out) {
  const Ontology onto = detail::load_ontology_arg(rc.ontology);
  if (rc.checkpoint.empty()) throw ConfigError("eval-task needs --checkpoint");
  TaskConfig saved;
  const auto model = load_graph_classifier(rc.checkpoint, onto, &saved);
  RunConfig eff = rc;
  eff.task = saved;
  const auto videos = task_source(rc, onto);
  const auto split_path = std::filesystem::path(rc.checkpoint).parent_path() / "split.json";
  VideoSplit split;
  if (rc.split != "all") split = detail::split_from_json(detail::read_json(split_path));
  const auto subset = detail::pick_split(videos, rc.split, split);
  const auto res = evaluate_task(model, subset, eff.task, onto);
  const auto snap = eff.snapshot(onto);
  const auto dir = detail::make_run_dir(out_root, "eval-task", snap);
  detail::write_text(dir / "config.json", snap.dump(2) + "\n");
  nlohmann::ordered_json report;
  report["task"] = eff.task.task;
  report["windows"] = res.windows.to_json();
  if (res.videos) report["videos"] = res.videos->to_json();
  detail::write_text(dir / "report.json", report.dump(2) + "\n");
  std::string table = "per window\n" + res.windows.to_table();
  if (res.videos) table += "per video (majority vote)\n" + res.videos->to_table();
  detail::write_text(dir / "report.txt", table);
  out << table << dir.string() << '\n';
  return dir;
}

inline void cmd_prompt(const RunConfig& rc, const std::string& video_id, int frame_idx, int history,
                       bool grounding, std::ostream& out) {
  const Ontology onto = detail::load_ontology_arg(rc.ontology);
  const auto videos = load_dataset(detail::data_dir(rc), onto);
  for (const auto& v : videos) {
    if (v.video_id != video_id) continue;
    for (std::size_t i = 0; i < v.frames.size(); ++i) {
      if (v.frames[i].frame_idx != frame_idx) continue;
      std::vector<FrameSceneGraph> hist;
      for (std::size_t k = i - std::min<std::size_t>(i, static_cast<std::size_t>(history)); k < i; ++k)
        hist.push_back(v.frames[k]);
      out << to_prompt(v.frames[i], hist, grounding, onto);
      return;
    }
    throw ConfigError("video " + video_id + " has no frame " + std::to_string(frame_idx));
  }
  throw ConfigError("no video " + video_id + " in dataset");
}

inline void cmd_export_queries(const RunConfig& rc, const std::filesystem::path& file,
                               std::ostream& out) {
  const Ontology onto = detail::load_ontology_arg(rc.ontology);
  const auto data = detail::data_dir(rc);
  const auto videos = load_dataset(data, onto);
  RunConfig synthetic = rc;
  synthetic.queries.clear();
  const auto provider = detail::make_provider(synthetic, data, onto, nullptr);
  write_queries_jsonl(file, *provider, videos);
  out << file.string() << '\n';
}

// ---------------------------------------------------------------------------
// Entry point

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  CLI::App app{"catsg: cataract scene-graph generation and downstream recognition"};
  app.require_subcommand(1);
  RunConfig rc;
  std::string config_file, out_root = "runs", variant_arg, window_arg, task_arg, video_id;
  std::optional<std::uint64_t> seed;
  bool no_spatial = false, no_grounding = false;
  int frame_idx = 0, history = 0;
  std::optional<int> n_videos, dim;
  std::optional<double> noise;

  auto common = [&](CLI::App* s, bool needs_data) {
    s->add_option("--config", config_file, "JSON file with sim/train/task sections");
    s->add_option("--ontology", rc.ontology, "ontology file (default: built-in)");
    if (needs_data)
      s->add_option("--data", rc.data, "dataset directory")->envname("CATSG_DATA_DIR");
  };
  auto* gen = app.add_subcommand("generate", "simulate a synthetic dataset");
  common(gen, false);
  gen->add_option("--seed", seed, "root seed");
  gen->add_option("--out", out_root, "output root")->required();
  gen->add_option("--videos", n_videos, "number of videos");
  gen->add_option("--noise", noise, "query noise std");
  gen->add_option("--dim", dim, "query width");

  auto* stats = app.add_subcommand("stats", "dataset statistics");
  common(stats, true);

  auto* trel = app.add_subcommand("train-rel", "train relation heads");
  common(trel, true);
  trel->add_option("--seed", seed, "training seed");
  trel->add_option("--out", out_root, "output root");
  trel->add_option("--variant", variant_arg, "CatSGG or CatSGG+");
  trel->add_option("--queries", rc.queries, "external queries file");

  auto* erel = app.add_subcommand("eval-rel", "evaluate relation heads");
  common(erel, true);
  erel->add_option("--checkpoint", rc.checkpoint, "heads checkpoint")->required();
  erel->add_option("--out", out_root, "output root");
  erel->add_option("--variant", variant_arg, "override the trained variant");
  erel->add_option("--split", rc.split, "train, test or all");
  erel->add_option("--queries", rc.queries, "external queries file");

  auto* ttask = app.add_subcommand("train-task", "train phase or technique recognition");
  common(ttask, true);
  ttask->add_option("--seed", seed, "training seed");
  ttask->add_option("--out", out_root, "output root");
  ttask->add_option("--task", task_arg, "phase or technique");
  ttask->add_option("--window", window_arg, "single, w30s90, 10s@5fps or 50s@1fps");
  ttask->add_flag("--no-spatial", no_spatial, "drop grounding features");
  ttask->add_option("--graphs", rc.graphs, "predicted graphs dataset instead of ground truth");

  auto* etask = app.add_subcommand("eval-task", "evaluate phase or technique recognition");
  common(etask, true);
  etask->add_option("--checkpoint", rc.checkpoint, "model checkpoint")->required();
  etask->add_option("--out", out_root, "output root");
  etask->add_option("--split", rc.split, "train, test or all");
  etask->add_option("--graphs", rc.graphs, "predicted graphs dataset instead of ground truth");

  auto* prompt = app.add_subcommand("prompt", "serialize a frame (with history) as text");
  common(prompt, true);
  prompt->add_option("--video", video_id, "video id")->required();
  prompt->add_option("--frame", frame_idx, "frame index")->required();
  prompt->add_option("--history", history, "number of preceding frames");
  prompt->add_flag("--no-grounding", no_grounding, "omit positions and sizes");

  auto* exq = app.add_subcommand("export-queries", "write synthetic queries to a file");
  common(exq, true);
  std::string queries_out;
  exq->add_option("--out", queries_out, "queries file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    detail::merge_config_file(rc, config_file);
    if (seed) {
      rc.sim.seed = *seed;
      rc.train.seed = *seed;
      rc.task.seed = *seed;
    }
    if (n_videos) rc.sim.n_videos = *n_videos;
    if (noise) rc.sim.noise = *noise;
    if (dim) rc.sim.dim = *dim;
    if (!variant_arg.empty()) rc.train.variant = parse_variant(variant_arg);
    if (!task_arg.empty()) rc.task.task = task_arg;
    if (!window_arg.empty()) {
      const bool spatial = rc.task.window.spatial;
      rc.task.window = window_preset(window_arg);
      rc.task.window.spatial = spatial;
    }
    if (no_spatial) rc.task.window.spatial = false;

    auto* sub = app.get_subcommands().front();
    rc.command = sub->get_name();
    if (sub == gen) cmd_generate(rc, out_root, out);
    else if (sub == stats) cmd_stats(rc, out);
    else if (sub == trel) cmd_train_rel(rc, out_root, out, err);
    else if (sub == erel)
      cmd_eval_rel(rc, out_root,
                   variant_arg.empty() ? std::nullopt : std::optional<Variant>(rc.train.variant), out);
    else if (sub == ttask) cmd_train_task(rc, out_root, out, err);
    else if (sub == etask) cmd_eval_task(rc, out_root, out);
    else if (sub == prompt) cmd_prompt(rc, video_id, frame_idx, history, !no_grounding, out);
    else if (sub == exq) cmd_export_queries(rc, queries_out, out);
    return kOk;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e);
  }
}

}  // namespace catsg::cli
