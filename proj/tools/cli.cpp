#include "cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <memory>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "vpdiag/anonymizer.hpp"
#include "vpdiag/audio.hpp"
#include "vpdiag/evaluation.hpp"
#include "vpdiag/features.hpp"
#include "vpdiag/manifest.hpp"
#include "vpdiag/models.hpp"
#include "vpdiag/parallel.hpp"
#include "vpdiag/scenario.hpp"
#include "vpdiag/synth.hpp"

namespace vpdiag::cli {

namespace fs = std::filesystem;
using nlohmann::json;

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument:
    case ErrorCode::kUnknownScenario:
    case ErrorCode::kForbiddenPairing:
      return kExitUsage;
    case ErrorCode::kUnmetDependency:
      return kExitUnmetDependency;
    default:
      return kExitData;
  }
}

namespace {

struct Common {
  int jobs = 1;
  std::string format = "text";
  bool verbose = false;
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(Common, jobs, format, verbose)

struct McArgs {
  double alpha = 0.8;
  int lpc_order = 20;
  double frame_ms = 20.0;
  double hop_ms = 10.0;
  std::string mode = "stateful";
  std::vector<double> random_alpha;
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(McArgs, alpha, lpc_order, frame_ms, hop_ms, mode, random_alpha)

struct AnonymizeArgs {
  std::string input;
  std::string output;
  McArgs mcadams;
  std::uint64_t seed = 0;
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(AnonymizeArgs, input, output, mcadams, seed)

struct FeaturesArgs {
  std::string kind = "msr";
  std::vector<std::string> inputs;
  std::string manifest;
  std::string condition = "clean";
  std::string partition;
  std::string out;
  std::string cache_dir;
  McArgs mcadams;
  std::uint64_t seed = 0;
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(FeaturesArgs, kind, inputs, manifest, condition, partition, out, cache_dir,
                                   mcadams, seed)

struct TrainArgs {
  std::string features;
  std::string valid;
  std::string out;
  std::string classifier = "svm";
  std::vector<double> c_grid = GridSpec{}.c_grid;
  std::vector<int> pcs_grid = {100, 150, 200, 250, 300, 0};
  double c = 1.0;
  int pcs = 0;
  bool class_weighting = true;
  std::uint64_t seed = 0;
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(TrainArgs, features, valid, out, classifier, c_grid, pcs_grid, c, pcs,
                                   class_weighting, seed)

struct EvaluateArgs {
  std::string model;
  std::string features;
  std::string out;
  int n_bootstrap = 1000;
  std::uint64_t seed = 0;
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(EvaluateArgs, model, features, out, n_bootstrap, seed)

struct ScenarioArgs {
  std::vector<std::string> manifests;
  std::string code = "A";
  std::string system = "msr_svm";
  std::string train_dataset;
  std::string test_dataset;
  std::string augment_dataset;
  std::string augment_condition = "clean";
  std::vector<double> c_grid;
  std::vector<int> pcs_grid;
  int n_bootstrap = 1000;
  McArgs mcadams;
  std::uint64_t seed = 0;
  std::string out;
  std::string cache_dir;
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(ScenarioArgs, manifests, code, system, train_dataset, test_dataset,
                                   augment_dataset, augment_condition, c_grid, pcs_grid, n_bootstrap, mcadams,
                                   seed, out, cache_dir)

struct MatrixArgs {
  std::vector<std::string> manifests;
  std::vector<std::string> codes = scenario_codes();
  std::vector<std::string> systems = {"msr_svm", "msr_pca_svm", "lld_svm", "lld_pca_svm", "logmelspec_svm"};
  std::string train_dataset;
  std::string test_dataset;
  std::string augment_dataset;
  std::string augment_condition = "clean";
  std::vector<double> c_grid;
  int n_bootstrap = 1000;
  McArgs mcadams;
  std::uint64_t seed = 0;
  std::string out;
  std::string cache_dir;
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(MatrixArgs, manifests, codes, systems, train_dataset, test_dataset,
                                   augment_dataset, augment_condition, c_grid, n_bootstrap, mcadams, seed, out,
                                   cache_dir)

struct PrivacyArgs {
  std::vector<std::string> manifests;
  std::string dataset;
  std::vector<std::string> conditions = {"clean", "mcadams"};
  McArgs mcadams;
  std::uint64_t seed = 0;
  std::string out;
  std::string cache_dir;
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(PrivacyArgs, manifests, dataset, conditions, mcadams, seed, out, cache_dir)

struct TimingArgs {
  std::vector<std::string> manifests;
  std::vector<std::string> inputs;
  std::vector<std::string> datasets;
  std::vector<std::string> methods = {"mcadams"};
  int limit = 0;
  McArgs mcadams;
  std::uint64_t seed = 0;
  std::string out;
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(TimingArgs, manifests, inputs, datasets, methods, limit, mcadams, seed, out)

struct SynthArgs {
  std::string dataset_id = "synth";
  int speakers = 20;
  int utterances = 10;
  double positive_fraction = 0.5;
  double duration = 3.0;
  std::string dialect = "A";
  std::uint64_t seed = 0;
  std::string out;
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(SynthArgs, dataset_id, speakers, utterances, positive_fraction, duration,
                                   dialect, seed, out)

struct ProjectArgs {
  std::vector<std::string> features;
  std::string out;
  std::string tag_by = "condition";
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(ProjectArgs, features, out, tag_by)

struct Io {
  std::ostream& out;
  std::ostream& err;
  Common common;

  bool json_output() const { return common.format == "json"; }
  void log(const std::string& message) const {
    if (common.verbose) err << "vpdiag: " << message << '\n';
  }
};

[[noreturn]] void usage_error(const std::string& message) { throw Error(ErrorCode::kInvalidArgument, message); }

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary);
  out << j.dump(2) << '\n';
  if (!out) throw Error(ErrorCode::kUnwritablePath, "cannot write " + path.string());
}

void write_resolved(const fs::path& path, const std::string& command, const Io& io, const json& args) {
  write_json(path, json{{"tool", "vpdiag"},
                        {"version", kCodeVersion},
                        {"command", command},
                        {"common", io.common},
                        {"args", args}});
  io.log("resolved config: " + path.string());
}

fs::path with_suffix(const fs::path& p, const std::string& suffix) { return fs::path(p.string() + suffix); }

McAdamsConfig to_config(const McArgs& a, std::uint64_t seed) {
  McAdamsConfig c;
  c.alpha = a.alpha;
  c.lpc_order = a.lpc_order;
  c.frame.frame_len_ms = a.frame_ms;
  c.frame.hop_ms = a.hop_ms;
  if (a.mode == "stateful") {
    c.mode = SynthesisMode::kStateful;
  } else if (a.mode == "ola") {
    c.mode = SynthesisMode::kOverlapAdd;
  } else {
    usage_error("--mode must be stateful or ola, got '" + a.mode + "'");
  }
  if (!a.random_alpha.empty()) {
    if (a.random_alpha.size() != 2) usage_error("--random-alpha takes two values: low,high");
    c.random_alpha_range = std::pair{a.random_alpha[0], a.random_alpha[1]};
    c.seed = seed;
  }
  c.validate();
  return c;
}

void add_mcadams_options(CLI::App* app, McArgs& a) {
  app->add_option("--alpha", a.alpha, "McAdams coefficient");
  app->add_option("--lpc-order", a.lpc_order, "LPC order");
  app->add_option("--frame-ms", a.frame_ms, "analysis frame length");
  app->add_option("--hop-ms", a.hop_ms, "analysis hop");
  app->add_option("--mode", a.mode, "synthesis mode")->check(CLI::IsMember({"stateful", "ola"}));
  app->add_option("--random-alpha", a.random_alpha, "per-utterance alpha range low,high")->delimiter(',');
}

fs::path resolve_cache_dir(const std::string& given, const fs::path& out_dir) {
  if (!given.empty()) return fs::absolute(given);
  if (const char* env = std::getenv("VPDIAG_CACHE_DIR"); env != nullptr && *env != '\0') return fs::absolute(env);
  return fs::absolute(out_dir / "cache");
}

std::unique_ptr<Harness> load_harness(const std::vector<std::string>& manifests, const fs::path& cache_dir,
                                      int jobs, const Io& io) {
  if (manifests.empty()) usage_error("at least one --manifest is required");
  HarnessOptions o;
  o.cache_dir = cache_dir;
  o.jobs = jobs;
  auto h = std::make_unique<Harness>(o);
  for (const auto& m : manifests) {
    DatasetManifest ds = load_manifest(m);
    io.log("loaded " + m + " as '" + ds.dataset_id + "' (" + std::to_string(ds.rows.size()) + " rows)");
    h->add_dataset(std::move(ds));
  }
  return h;
}

std::string default_dataset(const std::string& given, const std::vector<std::string>& manifests,
                            const Harness& h, const char* flag) {
  if (!given.empty()) return given;
  if (manifests.size() == 1) return load_manifest(manifests.front()).dataset_id;
  (void)h;
  usage_error(std::string(flag) + " is required with more than one manifest");
}

std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(precision) << v;
  return s.str();
}

// ---------------------------------------------------------------------------

int run_anonymize(const AnonymizeArgs& a, Io& io) {
  const McAdamsConfig cfg = to_config(a.mcadams, a.seed);
  const AudioBuffer in = read_wav(a.input);
  const AnonymizationResult r = anonymize_detailed(in, cfg);
  const fs::path out(a.output);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_wav(r.audio, out);
  write_sidecar(out, cfg, r, a.input);
  write_resolved(with_suffix(out, ".config.json"), "anonymize", io, a);
  if (io.json_output()) {
    io.out << json{{"output", a.output},
                   {"sidecar", sidecar_path(out).string()},
                   {"alpha_used", r.alpha_used},
                   {"frames", r.frames},
                   {"passthrough_frames", r.passthrough_frames},
                   {"root_failures", r.root_failures}}
                  .dump(2)
           << '\n';
  } else {
    io.out << "wrote " << a.output << " (alpha " << r.alpha_used << ", " << r.frames << " frames, "
           << r.passthrough_frames << " passed through)\n";
  }
  return kExitOk;
}

int run_features(FeaturesArgs a, Io& io) {
  const FeatureKind kind = parse_feature_kind(a.kind);
  if (kind == FeatureKind::kPhoneme) usage_error("phoneme features are ingested from files, not extracted");
  if (a.inputs.empty() == a.manifest.empty()) usage_error("give either input files or --manifest");
  const fs::path out(a.out);
  const McAdamsConfig mc = to_config(a.mcadams, a.seed);
  std::vector<FeatureVector> rows;

  if (!a.manifest.empty()) {
    a.cache_dir = resolve_cache_dir(a.cache_dir, out.parent_path()).string();
    auto h = load_harness({a.manifest}, a.cache_dir, io.common.jobs, io);
    const DatasetManifest& ds = *&h->dataset(load_manifest(a.manifest).dataset_id);
    std::vector<const ManifestRow*> selected;
    for (const auto& row : ds.rows) {
      if (a.partition.empty() || row.partition == parse_partition(a.partition)) selected.push_back(&row);
    }
    if (const auto missing = h->missing_audio(ds, selected, a.condition); !missing.empty()) {
      std::string list;
      for (const auto& m : missing) list += "\n  " + m;
      throw Error(ErrorCode::kUnmetDependency,
                  "condition '" + a.condition + "' has no audio for " + std::to_string(missing.size()) +
                      " row(s):" + list);
    }
    rows.resize(selected.size());
    parallel_for(selected.size(), io.common.jobs, [&](std::size_t i) {
      const ManifestRow& row = *selected[i];
      FeatureVector& fv = rows[i];
      fv.values = h->features(row, a.condition, kind, mc);
      fv.kind = kind;
      fv.utterance_id = row.utterance_id;
      fv.label = row.label;
      fv.dataset_id = ds.dataset_id;
      fv.anonymization_tag = a.condition;
    });
  } else {
    if (a.condition != "clean" && a.condition != "mcadams") {
      usage_error("input files support the clean and mcadams conditions; external audio needs a manifest");
    }
    rows.resize(a.inputs.size());
    parallel_for(a.inputs.size(), io.common.jobs, [&](std::size_t i) {
      AudioBuffer audio = load_canonical(a.inputs[i]);
      if (a.condition == "mcadams") audio = anonymize(audio, mc);
      FeatureVector fv = extract_features(kind, audio);
      fv.utterance_id = fs::path(a.inputs[i]).stem().string();
      fv.anonymization_tag = a.condition;
      rows[i] = std::move(fv);
    });
  }
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_feature_file(out, rows);
  write_resolved(with_suffix(out, ".config.json"), "features extract", io, a);
  if (io.json_output()) {
    io.out << json{{"output", a.out}, {"kind", to_string(kind)}, {"rows", rows.size()}}.dump(2) << '\n';
  } else {
    io.out << "wrote " << rows.size() << " " << to_string(kind) << " vectors to " << a.out << '\n';
  }
  return kExitOk;
}

LabelledSet labelled_from_file(const std::string& path, FeatureKind* kind) {
  const std::vector<FeatureVector> rows = read_feature_file(path);
  if (rows.empty()) throw Error(ErrorCode::kEmptyInput, path + ": no feature rows");
  LabelledSet s;
  s.x = stack_features(rows);
  s.y.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].kind != rows.front().kind) throw Error(ErrorCode::kSchema, path + ": mixed feature kinds");
    if (!rows[i].label) throw Error(ErrorCode::kSchema, path + ": row " + rows[i].utterance_id + " has no label");
    s.y[static_cast<Eigen::Index>(i)] = *rows[i].label == Label::kPositive ? 1.0 : -1.0;
    s.ids.push_back(rows[i].dataset_id + ":" + rows[i].utterance_id);
  }
  if (kind != nullptr) *kind = rows.front().kind;
  return s;
}

int run_train(const TrainArgs& a, Io& io) {
  if (a.classifier != "svm" && a.classifier != "lda") usage_error("--classifier must be svm or lda");
  FeatureKind kind = FeatureKind::kMsr;
  const LabelledSet train = labelled_from_file(a.features, &kind);
  const fs::path out(a.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  Pipeline model;
  json summary;
  if (!a.valid.empty()) {
    FeatureKind valid_kind = kind;
    const LabelledSet valid = labelled_from_file(a.valid, &valid_kind);
    if (valid_kind != kind) throw Error(ErrorCode::kDimensionMismatch, "train and validation kinds differ");
    if (a.classifier == "lda") usage_error("grid search applies to the svm classifier; drop --valid for lda");
    GridSpec g;
    g.c_grid = a.c_grid;
    g.pcs_grid.clear();
    for (int p : a.pcs_grid) g.pcs_grid.push_back(p > 0 ? std::optional<Eigen::Index>(p) : std::nullopt);
    g.class_weighting = a.class_weighting;
    g.seed = a.seed;
    const GridSearchResult r = grid_search(train, valid, g, kind);
    model = r.best;
    std::ofstream grid_csv(with_suffix(out, ".grid.csv"));
    grid_csv << r.to_csv();
    summary = {{"c", r.best_entry.c},
               {"effective_pcs", r.best_entry.effective_pcs ? json(*r.best_entry.effective_pcs) : json(nullptr)},
               {"validation_auc", r.best_entry.validation_auc},
               {"warnings", r.warnings}};
  } else {
    PipelineConfig pc;
    pc.classifier = a.classifier == "svm" ? ClassifierKind::kSvm : ClassifierKind::kLda;
    pc.c = a.c;
    if (a.pcs > 0) pc.n_components = a.pcs;
    pc.class_weighting = a.class_weighting;
    pc.seed = a.seed;
    model = fit_pipeline(train.x, train.y, pc, kind);
    summary = {{"c", a.c}, {"effective_pcs", model.pca ? json(model.pca->k()) : json(nullptr)}};
  }
  pipeline_save(model, out);
  write_resolved(with_suffix(out, ".config.json"), "model train", io, a);
  summary["model"] = a.out;
  summary["fingerprint"] = model.fingerprint;
  summary["n_train"] = train.ids.size();
  if (io.json_output()) {
    io.out << summary.dump(2) << '\n';
  } else {
    io.out << "trained " << to_string(kind) << " " << a.classifier << " on " << train.ids.size()
           << " rows; model " << a.out << " (" << model.fingerprint << ")\n";
  }
  return kExitOk;
}

int run_evaluate(const EvaluateArgs& a, Io& io) {
  const Pipeline model = pipeline_load(a.model);
  FeatureKind kind = model.kind;
  const LabelledSet test = labelled_from_file(a.features, &kind);
  if (kind != model.kind) {
    throw Error(ErrorCode::kDimensionMismatch, std::string("model expects ") + to_string(model.kind) +
                                                   " features, file holds " + to_string(kind));
  }
  const AucResult r = bootstrap_ci(model.score(test.x), test.y, a.n_bootstrap, a.seed);
  const json report = {{"model", a.model},
                       {"model_fingerprint", model.fingerprint},
                       {"features", a.features},
                       {"n", test.ids.size()},
                       {"n_positive", (test.y.array() > 0).count()},
                       {"auc", r.to_json()}};
  write_json(a.out, report);
  write_resolved(with_suffix(fs::path(a.out), ".config.json"), "model evaluate", io, a);
  if (io.json_output()) {
    io.out << report.dump(2) << '\n';
  } else {
    io.out << "AUC " << fmt(r.auc) << " (95% CI " << fmt(r.ci_low) << "-" << fmt(r.ci_high) << ", "
           << r.n_bootstrap << " resamples) on " << test.ids.size() << " rows\n";
  }
  return kExitOk;
}

ScenarioConfig scenario_config(const ScenarioArgs& a) {
  ScenarioConfig c;
  c.code = a.code;
  c.train_dataset = a.train_dataset;
  c.test_dataset = a.test_dataset;
  c.system = system_by_name(a.system);
  if (!a.c_grid.empty()) c.system.grid.c_grid = a.c_grid;
  if (!a.pcs_grid.empty()) {
    c.system.grid.pcs_grid.clear();
    for (int p : a.pcs_grid) c.system.grid.pcs_grid.push_back(p > 0 ? std::optional<Eigen::Index>(p) : std::nullopt);
  }
  if (!a.augment_dataset.empty()) c.augmentation = AugmentationSpec{a.augment_dataset, a.augment_condition};
  c.seed = a.seed;
  c.n_bootstrap = a.n_bootstrap;
  c.mcadams = to_config(a.mcadams, a.seed);
  return c;
}

std::string describe(const ScenarioResult& r) {
  std::ostringstream s;
  s << "scenario " << r.code << " / " << r.system << ": AUC " << fmt(r.auc.auc) << " (95% CI " << fmt(r.auc.ci_low)
    << "-" << fmt(r.auc.ci_high) << ")\n"
    << "  train " << r.train_condition << " on " << r.train_dataset << ", test " << r.test_condition << " on "
    << r.test_dataset << "\n"
    << "  n_train " << r.n_train;
  if (r.n_augment > 0) s << " (" << r.n_augment << " augmented)";
  s << ", n_valid " << r.n_valid << ", n_test " << r.n_test << "\n"
    << "  fingerprint " << r.fingerprint << "\n";
  for (const auto& w : r.warnings) s << "  warning: " << w << "\n";
  return s.str();
}

int run_scenario_cmd(ScenarioArgs a, Io& io) {
  const fs::path out(a.out);
  a.cache_dir = resolve_cache_dir(a.cache_dir, out).string();
  auto h = load_harness(a.manifests, a.cache_dir, io.common.jobs, io);
  a.train_dataset = default_dataset(a.train_dataset, a.manifests, *h, "--train-dataset");
  const ScenarioResult r = run_scenario(*h, scenario_config(a));
  write_json(out / "result.json", r.to_json());
  write_resolved(out / "resolved_config.json", "scenario run", io, a);
  if (io.json_output()) {
    io.out << r.to_json().dump(2) << '\n';
  } else {
    io.out << describe(r);
  }
  return kExitOk;
}

int run_matrix_cmd(MatrixArgs a, Io& io) {
  const fs::path out(a.out);
  a.cache_dir = resolve_cache_dir(a.cache_dir, out).string();
  auto h = load_harness(a.manifests, a.cache_dir, io.common.jobs, io);
  a.train_dataset = default_dataset(a.train_dataset, a.manifests, *h, "--train-dataset");
  MatrixConfig mc;
  mc.codes = a.codes;
  for (const auto& code : mc.codes) resolve_scenario(code);
  for (const auto& name : a.systems) {
    SystemSpec s = system_by_name(name);
    if (!a.c_grid.empty()) s.grid.c_grid = a.c_grid;
    mc.systems.push_back(std::move(s));
  }
  mc.train_dataset = a.train_dataset;
  mc.test_dataset = a.test_dataset;
  if (!a.augment_dataset.empty()) mc.augmentation = AugmentationSpec{a.augment_dataset, a.augment_condition};
  mc.seed = a.seed;
  mc.n_bootstrap = a.n_bootstrap;
  mc.mcadams = to_config(a.mcadams, a.seed);
  const MatrixReport report = run_matrix(*h, mc);
  emit_report(report, out / "report.json");
  write_resolved(out / "resolved_config.json", "scenario matrix", io, a);
  if (io.json_output()) {
    io.out << report.to_json().dump(2) << '\n';
  } else {
    io.out << std::left << std::setw(6) << "code";
    for (const auto& s : mc.systems) io.out << std::setw(16) << s.name;
    io.out << "average\n";
    for (const auto& code : mc.codes) {
      io.out << std::setw(6) << code;
      for (const auto& cell : report.cells) {
        if (cell.code != code) continue;
        io.out << std::setw(16) << (cell.result ? fmt(cell.result->auc.auc) : "-");
      }
      const auto avg = report.scenario_average(code);
      io.out << (avg ? fmt(*avg) : "-") << '\n';
    }
    io.out << report.failures() << " of " << report.cells.size() << " cells failed; report "
           << (out / "report.json").string() << '\n';
  }
  if (report.failures() > 0) {
    std::map<std::string, std::size_t> by_code;
    for (const auto& c : report.cells) {
      if (!c.result) ++by_code[c.error_code];
    }
    for (const auto& [code, n] : by_code) io.err << "vpdiag: " << n << " cell(s) failed with " << code << '\n';
    const bool only_unmet = by_code.size() == 1 && by_code.begin()->first == to_string(ErrorCode::kUnmetDependency);
    return only_unmet ? kExitUnmetDependency : kExitData;
  }
  return kExitOk;
}

int run_augment_cmd(ScenarioArgs a, Io& io) {
  if (a.augment_dataset.empty()) usage_error("--augment-dataset is required");
  const fs::path out(a.out);
  a.cache_dir = resolve_cache_dir(a.cache_dir, out).string();
  auto h = load_harness(a.manifests, a.cache_dir, io.common.jobs, io);
  a.train_dataset = default_dataset(a.train_dataset, a.manifests, *h, "--train-dataset");
  const AugmentationStudy s = run_augmentation_study(*h, scenario_config(a));
  write_json(out / "augmentation.json", s.to_json());
  write_resolved(out / "resolved_config.json", "augment run", io, a);
  if (io.json_output()) {
    io.out << s.to_json().dump(2) << '\n';
  } else {
    io.out << describe(s.baseline_a) << describe(s.unaugmented) << describe(s.augmented)
           << "relative change vs A: " << fmt(s.unaugmented_change_pct(), 2) << "% unaugmented, "
           << fmt(s.augmented_change_pct(), 2) << "% augmented\n";
  }
  return kExitOk;
}

int run_privacy_cmd(PrivacyArgs a, Io& io) {
  const fs::path out(a.out);
  a.cache_dir = resolve_cache_dir(a.cache_dir, out).string();
  auto h = load_harness(a.manifests, a.cache_dir, io.common.jobs, io);
  a.dataset = default_dataset(a.dataset, a.manifests, *h, "--dataset");
  const PrivacyReport p = privacy_report(*h, a.dataset, a.conditions, to_config(a.mcadams, a.seed));
  write_json(out / "privacy.json", p.to_json());
  {
    std::ofstream csv(out / "similarity.csv");
    csv << p.conditions.to_csv();
    if (!csv) throw Error(ErrorCode::kUnwritablePath, "cannot write " + (out / "similarity.csv").string());
  }
  write_resolved(out / "resolved_config.json", "privacy report", io, a);
  if (io.json_output()) {
    io.out << p.to_json().dump(2) << '\n';
  } else {
    io.out << "threshold " << fmt(p.threshold) << " (EER " << fmt(p.eer) << ", " << p.genuine_pairs
           << " genuine / " << p.impostor_pairs << " impostor pairs)\n"
           << "clean same-speaker: mean similarity " << fmt(p.same_speaker_mean) << ", misclassification "
           << fmt(p.same_speaker_misclassification) << "\n";
    const auto& c = p.conditions;
    for (std::size_t j = 1; j < c.conditions.size(); ++j) {
      const auto jj = static_cast<Eigen::Index>(j);
      io.out << c.conditions[0] << " vs " << c.conditions[j] << ": mean similarity "
             << fmt(c.mean_similarity(0, jj)) << ", misclassification " << fmt(c.misclassification(0, jj))
             << "\n";
    }
  }
  return kExitOk;
}

int run_timing_cmd(const TimingArgs& a, Io& io) {
  if (a.manifests.empty() && a.inputs.empty()) usage_error("give --manifest or input files");
  const McAdamsConfig mc = to_config(a.mcadams, a.seed);
  std::vector<std::pair<std::string, std::vector<fs::path>>> sets;
  for (const auto& m : a.manifests) {
    const DatasetManifest ds = load_manifest(m);
    if (!a.datasets.empty() && std::find(a.datasets.begin(), a.datasets.end(), ds.dataset_id) == a.datasets.end()) {
      continue;
    }
    std::vector<fs::path> files;
    for (const auto& row : ds.rows) {
      if (const auto it = row.audio.find("clean"); it != row.audio.end()) files.push_back(it->second);
      if (a.limit > 0 && static_cast<int>(files.size()) >= a.limit) break;
    }
    sets.emplace_back(ds.dataset_id, std::move(files));
  }
  if (!a.inputs.empty()) sets.emplace_back("files", std::vector<fs::path>(a.inputs.begin(), a.inputs.end()));

  const fs::path out(a.out);
  json table = json::array(), reports = json::array();
  std::ostringstream csv;
  csv << "method,dataset,files,mean_s,std_s,failures,audio_mean_s,seconds_per_10s_audio\n";
  for (const auto& method : a.methods) {
    std::function<AudioBuffer(const AudioBuffer&)> process;
    if (method == "mcadams") {
      process = [&mc](const AudioBuffer& x) { return anonymize(x, mc); };
    } else if (method == "copy") {
      process = [](const AudioBuffer& x) { return x; };
    } else {
      usage_error("unknown timing method '" + method + "' (mcadams, copy)");
    }
    for (const auto& [dataset, files] : sets) {
      io.log("timing " + method + " on " + dataset + " (" + std::to_string(files.size()) + " files)");
      const TimingReport r = timing_benchmark(method, process, files, out / method / dataset, dataset);
      double audio_s = 0.0;
      std::size_t counted = 0;
      for (const auto& f : files) {
        try {
          const AudioBuffer x = read_wav(f);
          audio_s += static_cast<double>(x.size()) / x.sample_rate;
          ++counted;
        } catch (const Error&) {
        }
      }
      const double audio_mean = counted > 0 ? audio_s / static_cast<double>(counted) : 0.0;
      const double per_10s = audio_mean > 0.0 ? r.mean_s * 10.0 / audio_mean : 0.0;
      table.push_back({{"method", method},
                       {"dataset", dataset},
                       {"files", r.files},
                       {"mean_s", r.mean_s},
                       {"std_s", r.std_s},
                       {"failures", r.failures},
                       {"audio_mean_s", audio_mean},
                       {"seconds_per_10s_audio", per_10s}});
      reports.push_back(r.to_json());
      csv << method << ',' << dataset << ',' << r.files << ',' << r.mean_s << ',' << r.std_s << ','
          << r.failures << ',' << audio_mean << ',' << per_10s << '\n';
    }
  }
  const json doc = {{"hardware_note", hardware_note()}, {"table", table}, {"reports", reports}};
  write_json(out / "timing.json", doc);
  {
    std::ofstream f(out / "timing.csv");
    f << csv.str();
  }
  write_resolved(out / "resolved_config.json", "timing bench", io, a);
  if (io.json_output()) {
    io.out << doc.dump(2) << '\n';
  } else {
    io.out << "average computation time per file (" << hardware_note() << ")\n";
    for (const auto& row : table) {
      io.out << "  " << std::left << std::setw(10) << row["method"].get<std::string>() << std::setw(14)
             << row["dataset"].get<std::string>() << fmt(row["mean_s"].get<double>(), 3) << " +- "
             << fmt(row["std_s"].get<double>(), 3) << " s  (" << row["files"].get<std::size_t>() << " files, "
             << fmt(row["seconds_per_10s_audio"].get<double>(), 3) << " s per 10 s of audio)\n";
    }
  }
  return kExitOk;
}

int run_synth_cmd(const SynthArgs& a, Io& io) {
  CorpusConfig c;
  c.dataset_id = a.dataset_id;
  c.n_speakers = a.speakers;
  c.utt_per_speaker = a.utterances;
  c.positive_fraction = a.positive_fraction;
  c.duration_s = a.duration;
  c.dialect = parse_dialect(a.dialect);
  c.seed = a.seed;
  const fs::path out(a.out);
  const DatasetManifest m = generate_corpus(c, out, io.common.jobs);
  write_resolved(out / "resolved_config.json", "synth generate", io, a);
  const json summary = {{"manifest", (out / "manifest.csv").string()},
                        {"dataset_id", m.dataset_id},
                        {"utterances", m.rows.size()},
                        {"content_hash", m.content_hash()}};
  if (io.json_output()) {
    io.out << summary.dump(2) << '\n';
  } else {
    io.out << "wrote " << m.rows.size() << " utterances of '" << m.dataset_id << "' to " << a.out << '\n';
  }
  return kExitOk;
}

int run_project_cmd(const ProjectArgs& a, Io& io) {
  if (a.features.empty()) usage_error("at least one feature file is required");
  std::vector<FeatureVector> rows;
  for (const auto& f : a.features) {
    auto part = read_feature_file(f);
    rows.insert(rows.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  std::vector<std::string> ids, tags;
  for (const auto& r : rows) {
    ids.push_back(r.dataset_id.empty() ? r.utterance_id : r.dataset_id + ":" + r.utterance_id);
    if (a.tag_by == "condition") {
      tags.push_back(r.anonymization_tag);
    } else if (a.tag_by == "label") {
      tags.push_back(r.label ? to_string(*r.label) : "unknown");
    } else if (a.tag_by == "dataset") {
      tags.push_back(r.dataset_id);
    } else {
      usage_error("--tag-by must be condition, label or dataset");
    }
  }
  const Eigen::MatrixXd coords = project_2d(stack_features(rows));
  const fs::path out(a.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_projection_csv(out, coords, ids, tags);
  write_resolved(with_suffix(out, ".config.json"), "project 2d", io, a);
  if (io.json_output()) {
    io.out << json{{"output", a.out}, {"rows", rows.size()}}.dump(2) << '\n';
  } else {
    io.out << "wrote " << rows.size() << " projected rows to " << a.out << '\n';
  }
  return kExitOk;
}

using Handler = std::function<int(const json&, Io&)>;

const std::map<std::string, Handler>& handlers() {
  static const std::map<std::string, Handler> h = {
      {"anonymize", [](const json& j, Io& io) { return run_anonymize(j.get<AnonymizeArgs>(), io); }},
      {"features extract", [](const json& j, Io& io) { return run_features(j.get<FeaturesArgs>(), io); }},
      {"model train", [](const json& j, Io& io) { return run_train(j.get<TrainArgs>(), io); }},
      {"model evaluate", [](const json& j, Io& io) { return run_evaluate(j.get<EvaluateArgs>(), io); }},
      {"scenario run", [](const json& j, Io& io) { return run_scenario_cmd(j.get<ScenarioArgs>(), io); }},
      {"scenario matrix", [](const json& j, Io& io) { return run_matrix_cmd(j.get<MatrixArgs>(), io); }},
      {"augment run", [](const json& j, Io& io) { return run_augment_cmd(j.get<ScenarioArgs>(), io); }},
      {"privacy report", [](const json& j, Io& io) { return run_privacy_cmd(j.get<PrivacyArgs>(), io); }},
      {"timing bench", [](const json& j, Io& io) { return run_timing_cmd(j.get<TimingArgs>(), io); }},
      {"synth generate", [](const json& j, Io& io) { return run_synth_cmd(j.get<SynthArgs>(), io); }},
      {"project 2d", [](const json& j, Io& io) { return run_project_cmd(j.get<ProjectArgs>(), io); }},
  };
  return h;
}

int replay(const std::string& path, Io& io) {
  json doc;
  try {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::kMissingFile, "resolved config not found: " + path);
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kSchema, path + ": " + e.what());
  }
  const std::string command = doc.value("command", std::string());
  const auto it = handlers().find(command);
  if (it == handlers().end()) throw Error(ErrorCode::kSchema, path + ": unknown command '" + command + "'");
  try {
    io.common = doc.at("common").get<Common>();
    return it->second(doc.at("args"), io);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kSchema, path + ": " + e.what());
  }
}

void add_scenario_options(CLI::App* sub, ScenarioArgs& a, bool augment) {
  sub->add_option("--manifest", a.manifests, "dataset manifest (repeatable)")->required();
  sub->add_option("--code", a.code, "scenario code A, B1-B3, C1-C6, D1-D3");
  sub->add_option("--system", a.system, "system name")->check(CLI::IsMember(system_names()));
  sub->add_option("--train-dataset", a.train_dataset, "dataset id to train on");
  sub->add_option("--test-dataset", a.test_dataset, "dataset id to test on (cross-dataset run)");
  auto* aug = sub->add_option("--augment-dataset", a.augment_dataset, "external dataset whose train+valid rows are added");
  if (augment) aug->required();
  sub->add_option("--augment-condition", a.augment_condition, "condition of the augmentation audio");
  sub->add_option("--c-grid", a.c_grid, "override the SVM C grid")->delimiter(',');
  sub->add_option("--pcs-grid", a.pcs_grid, "override the PCA grid (0 = no PCA)")->delimiter(',');
  sub->add_option("--n-bootstrap", a.n_bootstrap, "bootstrap resamples");
  add_mcadams_options(sub, a.mcadams);
  sub->add_option("--seed", a.seed, "global seed")->required();
  sub->add_option("--out", a.out, "output directory")->required();
  sub->add_option("--cache-dir", a.cache_dir, "McAdams audio cache (default $VPDIAG_CACHE_DIR or <out>/cache)");
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Voice-privacy diagnostic toolkit", "vpdiag"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.fallthrough();
  Common common;
  app.add_option("-j,--jobs", common.jobs, "worker threads; results do not depend on it")
      ->check(CLI::PositiveNumber);
  app.add_option("--format", common.format, "report format")->check(CLI::IsMember({"text", "json"}));
  app.add_flag("-v,--verbose", common.verbose, "log progress to stderr");

  AnonymizeArgs anon;
  auto* anon_cmd = app.add_subcommand("anonymize", "McAdams-anonymize one WAV file");
  anon_cmd->add_option("input", anon.input, "input WAV")->required();
  anon_cmd->add_option("output", anon.output, "output WAV")->required();
  add_mcadams_options(anon_cmd, anon.mcadams);
  anon_cmd->add_option("--seed", anon.seed, "seed for --random-alpha");

  auto* features_cmd = app.add_subcommand("features", "feature extraction");
  features_cmd->require_subcommand(1);
  FeaturesArgs feats;
  auto* extract_cmd = features_cmd->add_subcommand("extract", "write a feature file");
  extract_cmd->add_option("--kind", feats.kind, "msr, lld_compact, prosodic, proxy_embedding, logmelspec_stats");
  extract_cmd->add_option("inputs", feats.inputs, "WAV files (instead of --manifest)");
  extract_cmd->add_option("--manifest", feats.manifest, "dataset manifest");
  extract_cmd->add_option("--condition", feats.condition, "clean, mcadams or external:<name>");
  extract_cmd->add_option("--partition", feats.partition, "only rows of this partition");
  extract_cmd->add_option("--out", feats.out, "feature file")->required();
  extract_cmd->add_option("--cache-dir", feats.cache_dir, "McAdams audio cache");
  add_mcadams_options(extract_cmd, feats.mcadams);
  extract_cmd->add_option("--seed", feats.seed, "seed for --random-alpha");

  auto* model_cmd = app.add_subcommand("model", "classifier training and evaluation");
  model_cmd->require_subcommand(1);
  TrainArgs train;
  auto* train_cmd = model_cmd->add_subcommand("train", "fit scaler, PCA and classifier");
  train_cmd->add_option("--features", train.features, "training feature file")->required();
  train_cmd->add_option("--valid", train.valid, "validation feature file; enables grid search");
  train_cmd->add_option("--out", train.out, "model JSON")->required();
  train_cmd->add_option("--classifier", train.classifier)->check(CLI::IsMember({"svm", "lda"}));
  train_cmd->add_option("--c-grid", train.c_grid)->delimiter(',');
  train_cmd->add_option("--pcs-grid", train.pcs_grid, "0 = no PCA")->delimiter(',');
  train_cmd->add_option("--c", train.c, "C without grid search");
  train_cmd->add_option("--pcs", train.pcs, "PCs without grid search (0 = none)");
  train_cmd->add_option("--class-weighting", train.class_weighting);
  train_cmd->add_option("--seed", train.seed)->required();
  EvaluateArgs eval;
  auto* eval_cmd = model_cmd->add_subcommand("evaluate", "AUC with a bootstrap CI");
  eval_cmd->add_option("--model", eval.model)->required();
  eval_cmd->add_option("--features", eval.features)->required();
  eval_cmd->add_option("--out", eval.out, "report JSON")->required();
  eval_cmd->add_option("--n-bootstrap", eval.n_bootstrap);
  eval_cmd->add_option("--seed", eval.seed)->required();

  auto* scenario_cmd = app.add_subcommand("scenario", "train/test condition scenarios");
  scenario_cmd->require_subcommand(1);
  ScenarioArgs scen;
  auto* scen_run = scenario_cmd->add_subcommand("run", "one scenario for one system");
  add_scenario_options(scen_run, scen, false);
  MatrixArgs matrix;
  auto* matrix_cmd = scenario_cmd->add_subcommand("matrix", "every code x system cell");
  matrix_cmd->add_option("--manifest", matrix.manifests)->required();
  matrix_cmd->add_option("--codes", matrix.codes)->delimiter(',');
  matrix_cmd->add_option("--systems", matrix.systems)->delimiter(',');
  matrix_cmd->add_option("--train-dataset", matrix.train_dataset);
  matrix_cmd->add_option("--test-dataset", matrix.test_dataset);
  matrix_cmd->add_option("--augment-dataset", matrix.augment_dataset);
  matrix_cmd->add_option("--augment-condition", matrix.augment_condition);
  matrix_cmd->add_option("--c-grid", matrix.c_grid)->delimiter(',');
  matrix_cmd->add_option("--n-bootstrap", matrix.n_bootstrap);
  add_mcadams_options(matrix_cmd, matrix.mcadams);
  matrix_cmd->add_option("--seed", matrix.seed)->required();
  matrix_cmd->add_option("--out", matrix.out, "output directory")->required();
  matrix_cmd->add_option("--cache-dir", matrix.cache_dir);

  auto* augment_cmd = app.add_subcommand("augment", "training-set augmentation");
  augment_cmd->require_subcommand(1);
  ScenarioArgs aug;
  aug.code = "B1";
  aug.augment_condition = "mcadams";
  auto* augment_run = augment_cmd->add_subcommand("run", "baseline A, plain and augmented scenario");
  add_scenario_options(augment_run, aug, true);

  auto* privacy_cmd = app.add_subcommand("privacy", "speaker-similarity privacy metrics");
  privacy_cmd->require_subcommand(1);
  PrivacyArgs priv;
  auto* privacy_report_cmd = privacy_cmd->add_subcommand("report", "proxy-embedding similarity report");
  privacy_report_cmd->add_option("--manifest", priv.manifests)->required();
  privacy_report_cmd->add_option("--dataset", priv.dataset);
  privacy_report_cmd->add_option("--conditions", priv.conditions, "first must be clean")->delimiter(',');
  add_mcadams_options(privacy_report_cmd, priv.mcadams);
  privacy_report_cmd->add_option("--seed", priv.seed)->required();
  privacy_report_cmd->add_option("--out", priv.out)->required();
  privacy_report_cmd->add_option("--cache-dir", priv.cache_dir);

  auto* timing_cmd = app.add_subcommand("timing", "anonymizer timing");
  timing_cmd->require_subcommand(1);
  TimingArgs timing;
  auto* bench_cmd = timing_cmd->add_subcommand("bench", "per-file time including read and write");
  bench_cmd->add_option("inputs", timing.inputs, "WAV files");
  bench_cmd->add_option("--manifest", timing.manifests);
  bench_cmd->add_option("--datasets", timing.datasets)->delimiter(',');
  bench_cmd->add_option("--methods", timing.methods, "mcadams, copy")->delimiter(',');
  bench_cmd->add_option("--limit", timing.limit, "files per dataset (0 = all)");
  add_mcadams_options(bench_cmd, timing.mcadams);
  bench_cmd->add_option("--seed", timing.seed);
  bench_cmd->add_option("--out", timing.out)->required();

  auto* synth_cmd = app.add_subcommand("synth", "synthetic corpus");
  synth_cmd->require_subcommand(1);
  SynthArgs synth;
  auto* gen_cmd = synth_cmd->add_subcommand("generate", "write WAVs, manifest and corpus config");
  gen_cmd->add_option("--dataset-id", synth.dataset_id);
  gen_cmd->add_option("--speakers", synth.speakers);
  gen_cmd->add_option("--utterances", synth.utterances, "per speaker");
  gen_cmd->add_option("--positive-fraction", synth.positive_fraction);
  gen_cmd->add_option("--duration", synth.duration, "seconds per utterance");
  gen_cmd->add_option("--dialect", synth.dialect)->check(CLI::IsMember({"A", "B"}));
  gen_cmd->add_option("--seed", synth.seed)->required();
  gen_cmd->add_option("--out", synth.out)->required();

  auto* project_cmd = app.add_subcommand("project", "feature-space projection");
  project_cmd->require_subcommand(1);
  ProjectArgs proj;
  auto* p2d = project_cmd->add_subcommand("2d", "PCA-to-2 coordinates as CSV");
  p2d->add_option("features", proj.features, "feature files")->required();
  p2d->add_option("--out", proj.out)->required();
  p2d->add_option("--tag-by", proj.tag_by)->check(CLI::IsMember({"condition", "label", "dataset"}));

  std::string replay_path;
  auto* replay_cmd = app.add_subcommand("replay", "rerun from a resolved-config JSON");
  replay_cmd->add_option("config", replay_path)->required();

  std::vector<std::string> argv_storage{"vpdiag"};
  argv_storage.insert(argv_storage.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& s : argv_storage) argv.push_back(s.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "vpdiag: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  Io io{out, err, common};
  try {
    if (anon_cmd->parsed()) return run_anonymize(anon, io);
    if (extract_cmd->parsed()) return run_features(feats, io);
    if (train_cmd->parsed()) return run_train(train, io);
    if (eval_cmd->parsed()) return run_evaluate(eval, io);
    if (scen_run->parsed()) return run_scenario_cmd(scen, io);
    if (matrix_cmd->parsed()) return run_matrix_cmd(matrix, io);
    if (augment_run->parsed()) return run_augment_cmd(aug, io);
    if (privacy_report_cmd->parsed()) return run_privacy_cmd(priv, io);
    if (bench_cmd->parsed()) return run_timing_cmd(timing, io);
    if (gen_cmd->parsed()) return run_synth_cmd(synth, io);
    if (p2d->parsed()) return run_project_cmd(proj, io);
    if (replay_cmd->parsed()) return replay(replay_path, io);
  } catch (const Error& e) {
    err << "vpdiag: error [" << to_string(e.code()) << "]: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "vpdiag: internal error: " << e.what() << '\n';
    return kExitInternal;
  }
  err << app.help();
  return kExitUsage;
}

}  // namespace vpdiag::cli
