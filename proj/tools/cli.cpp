#include "cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mlod/calibrator.hpp"
#include "mlod/combiner.hpp"
#include "mlod/detector.hpp"
#include "mlod/evaluator.hpp"
#include "mlod/featurepack.hpp"
#include "mlod/parallel.hpp"
#include "mlod/run_config.hpp"
#include "mlod/synthgen.hpp"

namespace mlod::cli {

namespace fs = std::filesystem;
using nlohmann::json;

int exit_code_for(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::ConfigError:
    case ErrorKind::InvalidSpec:
    case ErrorKind::UnknownScenario:
    case ErrorKind::UnknownSplit:
    case ErrorKind::KindMismatch:
    case ErrorKind::ShapeMismatch:
    case ErrorKind::DimMismatch:
    case ErrorKind::BadWeights:
    case ErrorKind::UnsupportedMethod:
    case ErrorKind::OutOfDomain:
    case ErrorKind::EmptyPVector:
      return 2;
    default:
      return 1;
  }
}

namespace {

// Flags shared by the pipeline subcommands; unset optionals leave the config
// file values alone.
struct PipelineFlags {
  std::string config;
  std::optional<double> alpha;
  std::vector<std::string> methods;
  std::optional<std::size_t> k;
  std::optional<double> temperature;
  std::optional<int> threads;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool quiet = false;
};

void add_pipeline_flags(CLI::App* cmd, PipelineFlags& f) {
  cmd->add_option("--config", f.config, "Run configuration (JSON)")->required();
  cmd->add_option("--alpha", f.alpha, "Test level; desired TPR is 1 - alpha");
  cmd->add_option("--method", f.methods, "Combiner (repeatable): bh adabh by fisher cauchy naive_and last_layer");
  cmd->add_option("--k", f.k, "Neighbour rank for knn scorers");
  cmd->add_option("--temperature", f.temperature, "Temperature for logit scorers");
  cmd->add_option("--threads", f.threads, "Worker threads (default: MLOD_THREADS or all cores)");
  cmd->add_option("--seed", f.seed, "Seed recorded in the run configuration");
  cmd->add_flag("--quiet", f.quiet, "Print nothing but errors (detect still writes JSON)");
}

RunConfig resolve_config(const PipelineFlags& f) {
  RunConfig rc = load_run_config(f.config);
  if (!f.methods.empty()) {
    rc.methods.clear();
    for (const auto& name : f.methods) rc.methods.push_back({combiner_method_from_string(name), rc.alpha, {}});
  }
  if (f.alpha) {
    if (!(*f.alpha > 0.0 && *f.alpha < 1.0)) throw Error(ErrorKind::ConfigError, "--alpha must lie in (0, 1)");
    rc.set_alpha(*f.alpha);
  }
  if (f.k) {
    if (*f.k == 0) throw Error(ErrorKind::ConfigError, "--k must be >= 1");
    rc.set_k(*f.k);
  }
  if (f.temperature) {
    if (!(*f.temperature > 0.0)) throw Error(ErrorKind::ConfigError, "--temperature must be positive");
    rc.set_temperature(*f.temperature);
  }
  if (f.seed) rc.seed = *f.seed;
  set_threads(resolve_threads(f.threads));
  return rc;
}

FeaturePack open_pack(const RunConfig& rc) {
  std::error_code ec;
  if (!fs::is_directory(rc.pack_path, ec))
    throw Error(ErrorKind::ConfigError, "pack directory " + rc.pack_path.string() + " does not exist");
  return load_pack(rc.pack_path);
}

DetectorOptions detector_options(const RunConfig& rc) {
  DetectorOptions o;
  o.reference_fraction = rc.reference_fraction;
  return o;
}

void write_text(const fs::path& file, const std::string& text) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::trunc);
  out << text;
  if (!out) throw Error(ErrorKind::IoFailure, "cannot write " + file.string());
}

std::vector<float> read_f32_file(const fs::path& file) {
  std::error_code ec;
  const auto bytes = fs::file_size(file, ec);
  if (ec) throw Error(ErrorKind::ConfigError, "cannot read vector file " + file.string());
  if (bytes % sizeof(float) != 0) throw Error(ErrorKind::ShapeMismatch, file.string() + " is not an f32 array");
  std::vector<float> v(bytes / sizeof(float));
  std::ifstream in(file, std::ios::binary);
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(bytes));
  if (!in) throw Error(ErrorKind::IoFailure, "cannot read " + file.string());
  return v;
}

std::string manifest_summary(const PackManifest& m) {
  std::ostringstream os;
  os << "pack " << m.root.string() << ": " << m.layer_count() << " layers\n";
  for (const auto& l : m.layers)
    os << "  layer " << l.index << "  " << l.name << "  " << to_string(l.kind) << "  dim " << l.dim << '\n';
  for (const auto& [name, count] : m.splits) os << "  split " << name << ": " << count << " samples\n";
  return os.str();
}

int cmd_synth(const std::string& scenario_name, const std::string& spec_file, const std::string& out_dir,
              std::optional<std::uint64_t> seed, std::optional<int> threads, bool quiet, std::ostream& out) {
  set_threads(resolve_threads(threads));
  synth::SynthSpec spec;
  if (!spec_file.empty()) {
    std::ifstream in(spec_file);
    if (!in) throw Error(ErrorKind::InvalidSpec, "cannot open spec " + spec_file);
    json j;
    try {
      j = json::parse(in);
    } catch (const json::exception& e) {
      throw Error(ErrorKind::InvalidSpec, std::string("spec is not valid JSON: ") + e.what());
    }
    spec = synth::spec_from_json(j);
  } else {
    spec = synth::scenario(scenario_name);
  }
  if (seed) spec.seed = *seed;
  FeaturePack pack = synth::generate(spec);
  write_pack(pack, out_dir);
  if (!quiet) out << manifest_summary(read_manifest(out_dir));
  return 0;
}

int cmd_eval(const PipelineFlags& flags, const std::string& csv_flag, std::ostream& out, std::ostream& err) {
  RunConfig rc = resolve_config(flags);
  if (!flags.out.empty()) rc.output = flags.out;
  if (!csv_flag.empty()) rc.csv = csv_flag;
  if (rc.output.empty()) rc.output = fs::path(flags.config).parent_path() / "report.json";

  const FeaturePack pack = open_pack(rc);
  EvalOptions options;
  options.target_tpr = rc.target_tpr;
  options.grid_size = rc.grid_size;
  options.detector = detector_options(rc);
  const auto scorers = rc.scorers_for(pack.manifest);
  const EvalReport report = evaluate(pack, scorers, rc.methods, options);

  for (const auto& w : report.warnings) err << "warning: " << w << '\n';
  write_text(rc.output, report_to_json(report, rc.to_json()).dump(2) + "\n");
  if (!rc.csv.empty()) write_text(rc.csv, report_to_csv(report));
  if (!flags.quiet) {
    out << report_to_table(report);
    out << "report written to " << rc.output.string() << '\n';
  }
  return 0;
}

int cmd_calibrate(const PipelineFlags& flags, std::ostream& out, std::ostream& err) {
  const RunConfig rc = resolve_config(flags);
  const fs::path dir = flags.out.empty() ? fs::path(flags.config).parent_path() / "tables" : fs::path(flags.out);
  const FeaturePack pack = open_pack(rc);
  const Detector detector = Detector::fit(pack, rc.scorers_for(pack.manifest), detector_options(rc));
  fs::create_directories(dir);
  for (std::size_t i = 0; i < detector.layers(); ++i) {
    const auto& layer = detector.layer(i);
    const auto& table = detector.table(i);
    const fs::path file = dir / table_file_name(layer.index, detector.scorer(i).method);
    save_table(table, file);
    if (table.low_resolution())
      err << "warning: layer " << layer.index << " has only " << table.size() << " calibration scores\n";
    if (!flags.quiet) {
      const auto s = table.sorted_scores();
      out << "layer " << layer.index << " (" << to_string(detector.scorer(i).method) << "): n=" << table.size()
          << " min=" << s.front() << " median=" << s[s.size() / 2] << " max=" << s.back()
          << " threshold@alpha=" << threshold_at(table, rc.alpha) << "  -> " << file.string() << '\n';
    }
  }
  return 0;
}

int cmd_detect(const PipelineFlags& flags, std::optional<std::size_t> sample, const std::string& split,
               const std::vector<std::string>& vector_files, const std::string& tables_dir, std::ostream& out) {
  const RunConfig rc = resolve_config(flags);
  if (sample.has_value() == !vector_files.empty())
    throw Error(ErrorKind::ConfigError, "give exactly one of --sample or --vectors");
  const FeaturePack pack = open_pack(rc);
  const auto scorers = rc.scorers_for(pack.manifest);

  std::optional<Detector> detector;
  if (tables_dir.empty()) {
    detector = Detector::fit(pack, scorers, detector_options(rc));
  } else {
    std::vector<CalibrationTable> tables;
    for (const auto& l : pack.manifest.layers)
      tables.push_back(load_table(fs::path(tables_dir) / table_file_name(l.index, scorers[l.index - 1].method)));
    detector = Detector::with_tables(pack, scorers, std::move(tables), detector_options(rc));
  }

  std::vector<std::vector<double>> rows;
  if (sample) {
    for (const auto& l : pack.manifest.layers) {
      const FeatureMatrix& m = pack.at(l.index, split);
      if (*sample >= m.rows())
        throw Error(ErrorKind::ShapeMismatch, "sample " + std::to_string(*sample) + " outside split '" + split +
                                                  "' of " + std::to_string(m.rows()) + " rows");
      const auto r = m.row(*sample);
      rows.emplace_back(r.begin(), r.end());
    }
  } else {
    if (vector_files.size() != pack.manifest.layer_count())
      throw Error(ErrorKind::ShapeMismatch, "need one vector file per layer (" +
                                                std::to_string(pack.manifest.layer_count()) + ")");
    for (const auto& f : vector_files) {
      const auto v = read_f32_file(f);
      rows.emplace_back(v.begin(), v.end());
    }
  }

  const auto scores = detector->sample_scores(rows);
  std::vector<double> p(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) p[i] = p_value(detector->table(i), scores[i]);

  json j;
  if (sample) {
    j["split"] = split;
    j["sample"] = *sample;
  } else {
    j["vectors"] = vector_files;
  }
  j["layers"] = json::array();
  for (std::size_t i = 0; i < p.size(); ++i)
    j["layers"].push_back({{"index", detector->layer(i).index},
                           {"name", detector->layer(i).name},
                           {"scorer", to_string(detector->scorer(i).method)},
                           {"score", scores[i]},
                           {"p_value", p[i]}});
  j["methods"] = json::object();
  for (const auto& config : rc.methods) {
    const DetectionResult r = combine(p, config);
    json entry{{"decision", to_string(r.decision)},
               {"alpha", config.alpha},
               {"statistic", r.statistic},
               {"rejected_layers", r.rejected_layers}};
    entry["m0_hat"] = r.m0_hat ? json(*r.m0_hat) : json(nullptr);
    j["methods"][std::string(to_string(config.method))] = entry;
  }
  out << j.dump(2) << '\n';
  return 0;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Layer-wise out-of-distribution detection with multiple-testing fusion", "mlod"};
  app.require_subcommand(1);

  std::string scenario_name, spec_file, synth_out;
  std::optional<std::uint64_t> synth_seed;
  std::optional<int> synth_threads;
  bool synth_quiet = false;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic feature pack");
  auto* scenario_opt = synth_cmd->add_option("--scenario", scenario_name,
                                             "Preset: null early_shift late_shift all_shift correlated_early");
  auto* spec_opt = synth_cmd->add_option("--spec", spec_file, "Synthetic spec file (JSON)");
  scenario_opt->excludes(spec_opt);
  synth_cmd->add_option("--out", synth_out, "Output pack directory")->required();
  synth_cmd->add_option("--seed", synth_seed, "Override the spec seed");
  synth_cmd->add_option("--threads", synth_threads, "Worker threads");
  synth_cmd->add_flag("--quiet", synth_quiet, "Do not print the manifest summary");

  PipelineFlags eval_flags;
  std::string eval_csv;
  auto* eval_cmd = app.add_subcommand("eval", "Score, calibrate, fuse and report metrics");
  add_pipeline_flags(eval_cmd, eval_flags);
  eval_cmd->add_option("--out", eval_flags.out, "Report JSON path");
  eval_cmd->add_option("--csv", eval_csv, "Also write a methods x datasets CSV table");

  PipelineFlags cal_flags;
  auto* cal_cmd = app.add_subcommand("calibrate", "Fit and persist per-layer calibration tables");
  add_pipeline_flags(cal_cmd, cal_flags);
  cal_cmd->add_option("--out", cal_flags.out, "Directory for calib_<layer>_<scorer>.bin files");

  PipelineFlags det_flags;
  std::optional<std::size_t> det_sample;
  std::string det_split{kTestIdSplit};
  std::vector<std::string> det_vectors;
  std::string det_tables;
  auto* det_cmd = app.add_subcommand("detect", "Per-sample p-values and verdicts as JSON");
  add_pipeline_flags(det_cmd, det_flags);
  det_cmd->add_option("--sample", det_sample, "Row index within --split");
  det_cmd->add_option("--split", det_split, "Split holding --sample");
  det_cmd->add_option("--vectors", det_vectors, "One raw f32le feature file per layer, in layer order");
  det_cmd->add_option("--tables", det_tables, "Directory of persisted calibration tables");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {  // --help
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << '\n';
    return 2;
  }

  try {
    if (synth_cmd->parsed()) {
      if (scenario_name.empty() && spec_file.empty()) {
        err << "usage error: synth needs --scenario or --spec\n";
        return 2;
      }
      return cmd_synth(scenario_name, spec_file, synth_out, synth_seed, synth_threads, synth_quiet, out);
    }
    if (eval_cmd->parsed()) return cmd_eval(eval_flags, eval_csv, out, err);
    if (cal_cmd->parsed()) return cmd_calibrate(cal_flags, out, err);
    if (det_cmd->parsed()) return cmd_detect(det_flags, det_sample, det_split, det_vectors, det_tables, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace mlod::cli
