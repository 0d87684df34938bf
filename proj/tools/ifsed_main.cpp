// Experiment front-end: dataset building, frame ingestion, round-based
// training, evaluation, ablation presets, and sweeps, all driven by one flat
// key=value config file. Exit codes: 0 ok, 2 config error, 3 data error,
// 4 internal error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ifsed/config.hpp"
#include "ifsed/corpus.hpp"
#include "ifsed/evaluation.hpp"
#include "ifsed/knowledge.hpp"
#include "ifsed/protocol.hpp"

namespace fs = std::filesystem;
using ifsed::json;

extern char** environ;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitInternal = 4;

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;  // key=value pairs
};

ifsed::KeyValueConfig load_config(const CommonArgs& args) {
  if (args.config_path.empty()) {
    throw ifsed::ConfigError("--config is required");
  }
  if (!fs::exists(args.config_path)) {
    throw ifsed::ConfigError("config file not found: " + args.config_path);
  }
  ifsed::KeyValueConfig cfg = ifsed::KeyValueConfig::parse_file(args.config_path);
  cfg.apply_env_overrides(environ);
  for (const auto& kv : args.overrides) {
    auto eq = kv.find('=');
    if (eq == std::string::npos) {
      throw ifsed::ConfigError("--set expects key=value, got: " + kv);
    }
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  return cfg;
}

void require_file(const std::string& path, const std::string& what) {
  if (path.empty()) throw ifsed::ConfigError(what + " is not configured");
  if (!fs::exists(path)) {
    throw ifsed::ConfigError(what + " not found: " + path);
  }
}

void ensure_dir(const std::string& path) {
  std::error_code ec;
  fs::create_directories(path, ec);
  if (ec) throw ifsed::Error("cannot create directory " + path);
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw ifsed::Error("cannot write " + path);
  out << text;
}

ifsed::ManifestConfig manifest_config_from(const ifsed::KeyValueConfig& cfg) {
  ifsed::ManifestConfig mc;
  mc.way = static_cast<int>(cfg.get_int("dataset.way"));
  mc.shot = static_cast<int>(cfg.get_int("dataset.shot"));
  mc.n_rounds = static_cast<int>(cfg.get_int("dataset.n_rounds"));
  mc.base_classes = static_cast<int>(cfg.get_int("dataset.base_classes"));
  mc.base_train = static_cast<int>(cfg.get_int("dataset.base_train"));
  mc.base_eval = static_cast<int>(cfg.get_int("dataset.base_eval"));
  mc.round_eval = static_cast<int>(cfg.get_int("dataset.round_eval"));
  mc.ood_classes = static_cast<int>(cfg.get_int("dataset.ood_classes"));
  mc.ood_eval = static_cast<int>(cfg.get_int("dataset.ood_eval"));
  mc.eligible_classes = static_cast<int>(cfg.get_int("dataset.eligible_classes"));
  mc.config_name = cfg.get_string("dataset.config_name");
  return mc;
}

// --------------------------------------------------------------------------
// build-dataset
// --------------------------------------------------------------------------

int cmd_build_dataset(const CommonArgs& args) {
  ifsed::KeyValueConfig resolved = ifsed::resolve_config(load_config(args));
  require_file(resolved.get_string("corpus.path"), "corpus.path");

  auto mentions = ifsed::read_mentions_jsonl(resolved.get_string("corpus.path"));
  auto unique = ifsed::dedupe_corpus(mentions);
  auto ranked = ifsed::rank_classes(unique);

  std::vector<std::string> warnings;
  ifsed::DatasetManifest manifest = ifsed::build_manifest(
      ranked, manifest_config_from(resolved),
      static_cast<std::uint64_t>(resolved.get_int("dataset.seed")), &warnings);
  ifsed::SplitAssignment assignment = ifsed::materialize_splits(unique, manifest);

  std::string dir = resolved.get_string("dataset.dir");
  ensure_dir(dir);
  ifsed::write_manifest(dir + "/manifest.json", manifest);
  ifsed::write_split_files(dir, unique, manifest, assignment);
  resolved.write_file(dir + "/config.resolved.conf");

  std::cout << "corpus: " << mentions.size() << " mentions, " << unique.size()
            << " unique, " << ranked.size() << " classes\n";
  std::cout << ifsed::manifest_stats_block(manifest);
  for (const auto& w : warnings) std::cout << "warning: " << w << "\n";
  std::cout << "dataset written to " << dir << "\n";
  return kExitOk;
}

// --------------------------------------------------------------------------
// ingest-frames
// --------------------------------------------------------------------------

int cmd_ingest_frames(const CommonArgs& args) {
  ifsed::KeyValueConfig resolved = ifsed::resolve_config(load_config(args));
  require_file(resolved.get_string("frames.path"), "frames.path");

  ifsed::FrameStore store = ifsed::ingest_frames(resolved.get_string("frames.path"));
  std::cout << "ingested " << store.size() << " frames\n";

  std::map<std::string, std::string> curated;
  if (!resolved.get_string("frames.curated_map").empty()) {
    require_file(resolved.get_string("frames.curated_map"), "frames.curated_map");
    curated = ifsed::read_curated_map(resolved.get_string("frames.curated_map"));
    std::cout << "curated map entries: " << curated.size() << "\n";
  }

  std::string manifest_path = resolved.get_string("dataset.dir") + "/manifest.json";
  if (fs::exists(manifest_path)) {
    ifsed::DatasetManifest manifest = ifsed::read_manifest(manifest_path);
    std::vector<std::string> classes;
    for (const auto& r : manifest.rounds) {
      if (r.role() == ifsed::RoundRole::ood) continue;
      classes.insert(classes.end(), r.classes.begin(), r.classes.end());
    }
    auto mapping = ifsed::map_all_classes(classes, store, curated);
    std::map<std::string, int> by_provenance;
    std::ostringstream table;
    for (const auto& [label, mapped] : mapping) {
      ++by_provenance[ifsed::provenance_name(mapped.provenance)];
      table << label << "\t" << mapped.frame.frame_id << "\t"
            << ifsed::provenance_name(mapped.provenance) << "\n";
    }
    ensure_dir(resolved.get_string("output.dir"));
    write_text(resolved.get_string("output.dir") + "/frame_mapping.tsv",
               table.str());
    std::cout << "mapped " << mapping.size() << " classes:";
    for (const auto& [prov, n] : by_provenance) {
      std::cout << " " << prov << "=" << n;
    }
    std::cout << "\n";
  }
  return kExitOk;
}

// --------------------------------------------------------------------------
// train
// --------------------------------------------------------------------------

struct LoadedRun {
  ifsed::DatasetManifest manifest;
  ifsed::SessionInputs inputs;
  ifsed::TrainingConfig training;
  ifsed::KeyValueConfig resolved;
};

LoadedRun load_run(const ifsed::KeyValueConfig& resolved) {
  LoadedRun run{ifsed::DatasetManifest{}, ifsed::SessionInputs{},
                ifsed::TrainingConfig::from_config(resolved), resolved};

  std::string dir = resolved.get_string("dataset.dir");
  require_file(dir + "/manifest.json", "dataset manifest");
  require_file(dir + "/split_assignment.jsonl", "split assignment");
  run.manifest = ifsed::read_manifest(dir + "/manifest.json");
  ifsed::SplitAssignment assignment =
      ifsed::read_split_assignment(dir + "/split_assignment.jsonl");

  // Load only the splits the session consumes; dev files stay untouched.
  std::vector<ifsed::EventMention> mentions;
  for (const auto& spec : run.manifest.rounds) {
    bool is_ood = spec.role() == ifsed::RoundRole::ood;
    bool is_base = spec.role() == ifsed::RoundRole::base;
    if (is_base && !run.training.include_base) continue;
    std::vector<ifsed::Split> wanted;
    if (is_ood) {
      wanted = {ifsed::Split::test};
    } else {
      wanted = {ifsed::Split::train, ifsed::Split::test};
    }
    for (ifsed::Split s : wanted) {
      std::string path = dir + "/" + spec.name() + "_" + split_name(s) + ".jsonl";
      require_file(path, "split file");
      auto part = ifsed::read_mentions_jsonl(path);
      mentions.insert(mentions.end(), part.begin(), part.end());
    }
  }

  // map_all_classes copies the mapped frames, so these can stay local.
  const ifsed::FrameStore* store_ptr = nullptr;
  const std::map<std::string, std::string>* curated_ptr = nullptr;
  ifsed::FrameStore store;
  std::map<std::string, std::string> curated;
  if (!resolved.get_string("frames.path").empty()) {
    require_file(resolved.get_string("frames.path"), "frames.path");
    store = ifsed::ingest_frames(resolved.get_string("frames.path"));
    store_ptr = &store;
  }
  if (!resolved.get_string("frames.curated_map").empty()) {
    require_file(resolved.get_string("frames.curated_map"), "frames.curated_map");
    curated = ifsed::read_curated_map(resolved.get_string("frames.curated_map"));
    curated_ptr = &curated;
  }

  run.inputs = ifsed::assemble_session_inputs(mentions, run.manifest, assignment,
                                              run.training.include_base,
                                              store_ptr, curated_ptr);
  return run;
}

int cmd_train(const CommonArgs& args, int resume_round) {
  ifsed::KeyValueConfig resolved = ifsed::resolve_config(load_config(args));
  LoadedRun run = load_run(resolved);

  std::string out_dir = resolved.get_string("output.dir");
  ensure_dir(out_dir);
  resolved.write_file(out_dir + "/config.resolved.conf");

  ifsed::SessionOptions options;
  options.after_round = [&](const ifsed::RoundState& state,
                            const ifsed::SessionResult& partial) {
    ifsed::write_checkpoint(out_dir + "/checkpoint_round_" +
                                std::to_string(partial.rounds.back().round_id) +
                                ".json",
                            state);
    ifsed::write_session_result(out_dir + "/session_result.json", partial);
  };
  options.on_telemetry = [](int round_id, const ifsed::RoundTelemetry& t) {
    std::cout << "round " << round_id << ": steps=" << t.steps << " loss "
              << t.initial_loss << " -> " << t.final_loss << "\n";
  };

  ifsed::SessionResult result;
  if (resume_round >= 0) {
    std::string ckpt = out_dir + "/checkpoint_round_" +
                       std::to_string(resume_round) + ".json";
    require_file(ckpt, "resume checkpoint");
    require_file(out_dir + "/session_result.json", "previous session result");
    ifsed::SessionContext ctx(run.training, run.inputs.frames,
                              run.inputs.corpus_index);
    ifsed::RoundState state = ifsed::read_checkpoint(ckpt, ctx);
    ifsed::SessionResult partial =
        ifsed::read_session_result(out_dir + "/session_result.json");
    while (!partial.rounds.empty() &&
           partial.rounds.back().round_id > resume_round) {
      partial.rounds.pop_back();
    }
    result = ifsed::continue_session(run.inputs, run.manifest, run.training,
                                     std::move(state), std::move(partial),
                                     options);
  } else {
    result = ifsed::run_session(run.inputs, run.manifest, run.training, options);
  }

  ifsed::write_session_result(out_dir + "/session_result.json", result);
  std::cout << "session complete: " << result.rounds.size()
            << " rounds, results in " << out_dir << "\n";
  return kExitOk;
}

// --------------------------------------------------------------------------
// evaluate
// --------------------------------------------------------------------------

void write_reports(const ifsed::F1Matrix& matrix,
                   const ifsed::SessionResult* result,
                   const std::string& out_dir, bool eq15_literal) {
  ensure_dir(out_dir);
  ifsed::AggregateCurve curve = ifsed::aggregate_pn(matrix);
  write_text(out_dir + "/matrix.txt", ifsed::matrix_text(matrix));
  write_text(out_dir + "/matrix.json", ifsed::matrix_to_json(matrix).dump(2) + "\n");
  write_text(out_dir + "/summary.txt", ifsed::summary_text(curve, eq15_literal));
  write_text(out_dir + "/summary.json",
             ifsed::summary_to_json(curve).dump(2) + "\n");
  if (result) {
    std::vector<double> taus;
    for (int i = 0; i <= 20; ++i) taus.push_back(0.05 * i);
    auto sweep = ifsed::ood_sweep(*result, taus);
    write_text(out_dir + "/ood_sweep.txt", ifsed::ood_sweep_text(sweep));
    write_text(out_dir + "/ood_sweep.json",
               ifsed::ood_sweep_to_json(sweep).dump(2) + "\n");
  }
  std::cout << ifsed::summary_text(curve, eq15_literal);
}

int cmd_evaluate(const std::string& result_path, const std::string& matrix_path,
                 const std::string& manifest_path, const std::string& out_dir,
                 bool eq15_literal) {
  if (!matrix_path.empty()) {
    require_file(matrix_path, "matrix file");
    std::ifstream in(matrix_path);
    json j;
    try {
      in >> j;
    } catch (const json::exception& e) {
      throw ifsed::ParseError(matrix_path + ": " + e.what());
    }
    ifsed::F1Matrix matrix = ifsed::matrix_from_json(j);
    write_reports(matrix, nullptr, out_dir, eq15_literal);
    return kExitOk;
  }

  require_file(result_path, "session result");
  ifsed::SessionResult result = ifsed::read_session_result(result_path);
  if (result.rounds.empty()) {
    throw ifsed::ParseError("session result has no rounds: " + result_path);
  }
  ifsed::DatasetManifest manifest;
  if (!manifest_path.empty()) {
    require_file(manifest_path, "manifest");
    manifest = ifsed::read_manifest(manifest_path);
  }
  ifsed::F1Matrix matrix = ifsed::round_matrix(result, manifest);
  write_reports(matrix, &result, out_dir, eq15_literal);
  return kExitOk;
}

// --------------------------------------------------------------------------
// ablate
// --------------------------------------------------------------------------

const std::map<std::string, std::map<std::string, std::string>>& ablate_presets() {
  static const std::map<std::string, std::map<std::string, std::string>> presets = {
      {"full", {{"model.variant", "ifsed-k"}}},
      {"no-ek",
       {{"model.variant", "ifsed-k"}, {"model.use_external_knowledge", "false"}}},
      {"no-ml", {{"model.variant", "ifsed-k"}, {"model.use_mixture_loss", "false"}}},
      {"no-ps",
       {{"model.variant", "ifsed-k"},
        {"model.use_prototype_selection", "false"}}},
      {"kcn",
       {{"model.variant", "ifsed-k"}, {"model.use_external_knowledge", "false"}}},
      {"kp-full", {{"model.variant", "ifsed-kp"}}},
      {"ake",
       {{"model.variant", "ifsed-kp"},
        {"model.use_mixture_loss", "false"},
        {"model.use_prototype_selection", "false"}}},
      {"kp-no-ml-ps",
       {{"model.variant", "ifsed-kp"},
        {"model.use_mixture_loss", "false"},
        {"model.use_prototype_selection", "false"}}},
      {"finetune", {{"model.variant", "finetune"}}},
  };
  return presets;
}

int cmd_ablate(const CommonArgs& args, const std::string& preset) {
  auto it = ablate_presets().find(preset);
  if (it == ablate_presets().end()) {
    std::string names;
    for (const auto& [name, kv] : ablate_presets()) {
      (void)kv;
      names += names.empty() ? name : ", " + name;
    }
    throw ifsed::ConfigError("unknown preset " + preset + " (choose from " +
                             names + ")");
  }
  CommonArgs derived = args;
  ifsed::KeyValueConfig base = ifsed::resolve_config(load_config(args));
  for (const auto& [key, value] : it->second) {
    derived.overrides.push_back(key + "=" + value);
  }
  // keep the shared dataset; only the run outputs move under the preset name
  derived.overrides.push_back("dataset.dir=" + base.get_string("dataset.dir"));
  derived.overrides.push_back("output.dir=" + base.get_string("output.dir") +
                              "/" + preset);
  std::cout << "ablation preset " << preset << "\n";
  return cmd_train(derived, -1);
}

// --------------------------------------------------------------------------
// sweep
// --------------------------------------------------------------------------

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

int cmd_sweep(const CommonArgs& args, const std::string& axis,
              const std::string& values_csv, const std::string& seeds_csv) {
  if (axis != "shot" && axis != "way" && axis != "retained") {
    throw ifsed::ConfigError("sweep axis must be shot, way or retained");
  }
  std::vector<std::string> values = split_csv(values_csv);
  if (values.empty()) throw ifsed::ConfigError("sweep needs --values");

  ifsed::KeyValueConfig base = ifsed::resolve_config(load_config(args));
  std::vector<std::string> seeds = seeds_csv.empty()
                                       ? std::vector<std::string>{base.get_string(
                                             "train.seed")}
                                       : split_csv(seeds_csv);

  std::string root = base.get_string("output.dir") + "/sweep_" + axis;
  ensure_dir(root);

  json combined = json::array();
  std::ostringstream table;
  table << ifsed::detail::cell8(axis) << ifsed::detail::cell8("new");

  bool header_done = false;
  for (const auto& value : values) {
    // Axes that change the data need their own dataset build.
    std::string dataset_dir = base.get_string("dataset.dir");
    CommonArgs setting = args;
    if (axis == "shot" || axis == "way") {
      dataset_dir = root + "/dataset_" + value;
      setting.overrides.push_back("dataset." + axis + "=" + value);
      setting.overrides.push_back("dataset.dir=" + dataset_dir);
      setting.overrides.push_back("dataset.config_name=");
      try {
        CommonArgs build = setting;
        cmd_build_dataset(build);
      } catch (const std::exception& e) {
        combined.push_back(json{{"value", value}, {"error", e.what()}});
        continue;
      }
    } else {
      setting.overrides.push_back("memory.exemplars_per_class=" + value);
      setting.overrides.push_back("dataset.dir=" + dataset_dir);
    }

    std::vector<ifsed::AggregateCurve> curves;
    std::vector<std::string> errors;
    for (const auto& seed : seeds) {
      CommonArgs run = setting;
      std::string out_dir = root + "/" + axis + value + "_seed" + seed;
      run.overrides.push_back("train.seed=" + seed);
      run.overrides.push_back("output.dir=" + out_dir);
      try {
        cmd_train(run, -1);
        cmd_evaluate(out_dir + "/session_result.json", "",
                     dataset_dir + "/manifest.json", out_dir + "/reports",
                     false);
        std::ifstream in(out_dir + "/reports/summary.json");
        json j;
        in >> j;
        ifsed::AggregateCurve curve;
        curve.new_avg = j.at("new").get<double>();
        curve.p = j.at("p").get<std::vector<double>>();
        curves.push_back(curve);
      } catch (const std::exception& e) {
        errors.push_back(std::string("seed ") + seed + ": " + e.what());
      }
    }

    if (curves.empty()) {
      combined.push_back(json{{"value", value}, {"errors", errors}});
      continue;
    }
    ifsed::AggregateCurve mean_curve;
    mean_curve.p.assign(curves.front().p.size(), 0.0);
    for (const auto& c : curves) {
      mean_curve.new_avg += c.new_avg / curves.size();
      for (std::size_t i = 0; i < mean_curve.p.size(); ++i) {
        mean_curve.p[i] += c.p[i] / curves.size();
      }
    }
    if (!header_done) {
      for (std::size_t n = 1; n <= mean_curve.p.size(); ++n) {
        table << ifsed::detail::cell8("p-" + std::to_string(n));
      }
      table << "forgetting\n";
      header_done = true;
    }
    double rate = ifsed::forgetting_rate(mean_curve);
    table << ifsed::detail::cell8(value)
          << ifsed::detail::cell8(ifsed::detail::fixed2(mean_curve.new_avg));
    for (double p : mean_curve.p) {
      table << ifsed::detail::cell8(ifsed::detail::fixed2(p));
    }
    table << ifsed::detail::fixed2(rate) << "%\n";
    combined.push_back(json{{"value", value},
                            {"seeds", seeds},
                            {"new", mean_curve.new_avg},
                            {"p", mean_curve.p},
                            {"forgetting_rate", rate},
                            {"errors", errors}});
  }

  write_text(root + "/combined_curves.txt", table.str());
  write_text(root + "/combined_curves.json", combined.dump(2) + "\n");
  std::cout << table.str();
  std::cout << "sweep written to " << root << "\n";
  return kExitOk;
}

// --------------------------------------------------------------------------
// report
// --------------------------------------------------------------------------

int cmd_report(const std::string& inputs_csv, const std::string& labels_csv,
               const std::string& out_dir) {
  std::vector<std::string> inputs = split_csv(inputs_csv);
  if (inputs.empty()) throw ifsed::ConfigError("report needs --inputs");
  std::vector<std::string> labels = split_csv(labels_csv);

  std::ostringstream table;
  json combined = json::array();
  bool header_done = false;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    std::string path = inputs[i];
    if (fs::is_directory(path)) path += "/reports/matrix.json";
    require_file(path, "matrix file");
    std::ifstream in(path);
    json j;
    try {
      in >> j;
    } catch (const json::exception& e) {
      throw ifsed::ParseError(path + ": " + e.what());
    }
    ifsed::F1Matrix matrix = ifsed::matrix_from_json(j);
    ifsed::AggregateCurve curve = ifsed::aggregate_pn(matrix);
    std::string label = i < labels.size() ? labels[i] : "run" + std::to_string(i);
    if (!header_done) {
      table << ifsed::detail::cell8("run") << ifsed::detail::cell8("new");
      for (std::size_t n = 1; n <= curve.p.size(); ++n) {
        table << ifsed::detail::cell8("p-" + std::to_string(n));
      }
      table << "forgetting\n";
      header_done = true;
    }
    table << ifsed::detail::cell8(label)
          << ifsed::detail::cell8(ifsed::detail::fixed2(curve.new_avg));
    for (double p : curve.p) table << ifsed::detail::cell8(ifsed::detail::fixed2(p));
    table << ifsed::detail::fixed2(ifsed::forgetting_rate(curve)) << "%\n";
    json entry = ifsed::summary_to_json(curve);
    entry["label"] = label;
    combined.push_back(entry);
  }

  ensure_dir(out_dir);
  write_text(out_dir + "/combined_summary.txt", table.str());
  write_text(out_dir + "/combined_summary.json", combined.dump(2) + "\n");
  std::cout << table.str();
  return kExitOk;
}

int classify_exception(const std::exception& e) {
  if (dynamic_cast<const ifsed::ConfigError*>(&e)) return kExitConfig;
  if (dynamic_cast<const ifsed::ParseError*>(&e) ||
      dynamic_cast<const ifsed::InsufficientClasses*>(&e) ||
      dynamic_cast<const ifsed::InsufficientSamplesPerClass*>(&e) ||
      dynamic_cast<const ifsed::MissingMention*>(&e) ||
      dynamic_cast<const ifsed::DuplicateFrameId*>(&e) ||
      dynamic_cast<const ifsed::SpanOutOfRange*>(&e) ||
      dynamic_cast<const ifsed::DuplicateClass*>(&e) ||
      dynamic_cast<const ifsed::EmptyClass*>(&e) ||
      dynamic_cast<const ifsed::UnknownClass*>(&e) ||
      dynamic_cast<const ifsed::MissingKnowledge*>(&e) ||
      dynamic_cast<const ifsed::NonProbabilityInput*>(&e) ||
      dynamic_cast<const ifsed::NegativePrev*>(&e)) {
    return kExitData;
  }
  return kExitInternal;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"few-shot incremental event detection workbench"};
  app.require_subcommand(1);

  CommonArgs common;
  int resume_round = -1;
  std::string result_path, matrix_path, manifest_path, out_dir = "reports";
  bool eq15_literal = false;
  std::string preset, axis, values_csv, seeds_csv, inputs_csv, labels_csv;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", common.config_path, "experiment config file");
    cmd->add_option("--set", common.overrides,
                    "override a config key (key=value, repeatable)");
  };

  CLI::App* build = app.add_subcommand("build-dataset",
                                       "build manifest and split files");
  add_common(build);

  CLI::App* ingest = app.add_subcommand("ingest-frames",
                                        "validate a frame file and map classes");
  add_common(ingest);

  CLI::App* train = app.add_subcommand("train", "run an incremental session");
  add_common(train);
  train->add_option("--resume", resume_round,
                    "continue after this round's checkpoint");

  CLI::App* evaluate = app.add_subcommand("evaluate", "reports from a session");
  evaluate->add_option("--result", result_path, "session_result.json path");
  evaluate->add_option("--matrix", matrix_path, "precomputed F1 matrix json");
  evaluate->add_option("--manifest", manifest_path, "dataset manifest");
  evaluate->add_option("--out", out_dir, "report directory");
  evaluate->add_flag("--eq15-literal", eq15_literal,
                     "report the literal forgetting-rate formula");

  CLI::App* ablate = app.add_subcommand("ablate", "train with a preset flag bundle");
  add_common(ablate);
  ablate->add_option("--preset", preset, "full|no-ek|no-ml|no-ps|kcn|kp-full|ake|finetune")
      ->required();

  CLI::App* sweep = app.add_subcommand("sweep", "run a setting sweep");
  add_common(sweep);
  sweep->add_option("--axis", axis, "shot|way|retained")->required();
  sweep->add_option("--values", values_csv, "comma-separated values")->required();
  sweep->add_option("--seeds", seeds_csv, "comma-separated train seeds");

  CLI::App* report = app.add_subcommand("report", "combine matrices into one table");
  report->add_option("--inputs", inputs_csv,
                     "comma-separated matrix.json files or run dirs")
      ->required();
  report->add_option("--labels", labels_csv, "comma-separated row labels");
  report->add_option("--out", out_dir, "report directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (build->parsed()) return cmd_build_dataset(common);
    if (ingest->parsed()) return cmd_ingest_frames(common);
    if (train->parsed()) return cmd_train(common, resume_round);
    if (evaluate->parsed()) {
      if (result_path.empty() && matrix_path.empty()) {
        throw ifsed::ConfigError("evaluate needs --result or --matrix");
      }
      return cmd_evaluate(result_path, matrix_path, manifest_path, out_dir,
                          eq15_literal);
    }
    if (ablate->parsed()) return cmd_ablate(common, preset);
    if (sweep->parsed()) return cmd_sweep(common, axis, values_csv, seeds_csv);
    if (report->parsed()) return cmd_report(inputs_csv, labels_csv, out_dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return classify_exception(e);
  }
  return kExitOk;
}
