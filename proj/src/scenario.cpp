#include "vpdiag/scenario.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>
#include <thread>

#include "vpdiag/error.hpp"
#include "vpdiag/parallel.hpp"
#include "vpdiag/random.hpp"

namespace fs = std::filesystem;

namespace vpdiag {

namespace {

constexpr const char* kFeatureVersion = "features-1";
constexpr const char* kLingGan = "external:ling-gan";
constexpr const char* kLingProsGan = "external:ling-pros-gan";

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

std::string qualified(const DatasetManifest& ds, const ManifestRow& row) {
  return ds.dataset_id + ":" + row.utterance_id;
}

nlohmann::json pcs_to_json(const std::optional<Eigen::Index>& k) {
  return k ? nlohmann::json(*k) : nlohmann::json(nullptr);
}

int resolve_jobs(const Harness& h, int jobs) { return jobs > 0 ? jobs : std::max(1, h.options().jobs); }

}  // namespace

const std::vector<std::string>& scenario_codes() {
  static const std::vector<std::string> codes = {"A",  "B1", "B2", "B3", "C1", "C2", "C3",
                                                 "C4", "C5", "C6", "D1", "D2", "D3"};
  return codes;
}

ScenarioConditions resolve_scenario(std::string_view code) {
  static const std::map<std::string, ScenarioConditions, std::less<>> table = {
      {"A", {"clean", "clean"}},
      {"B1", {"clean", "mcadams"}},
      {"B2", {"clean", kLingGan}},
      {"B3", {"clean", kLingProsGan}},
      {"C1", {"mcadams", kLingGan}},
      {"C2", {"mcadams", kLingProsGan}},
      {"C3", {kLingGan, "mcadams"}},
      {"C4", {kLingGan, kLingProsGan}},
      {"C5", {kLingProsGan, "mcadams"}},
      {"C6", {kLingProsGan, kLingGan}},
      {"D1", {"mcadams", "mcadams"}},
      {"D2", {kLingGan, kLingGan}},
      {"D3", {kLingProsGan, kLingProsGan}},
  };
  const auto it = table.find(code);
  if (it == table.end()) {
    throw Error(ErrorCode::kUnknownScenario, "unknown scenario code '" + std::string(code) +
                                                 "' (expected A, B1-B3, C1-C6 or D1-D3)");
  }
  return it->second;
}

nlohmann::json SystemSpec::to_json() const {
  nlohmann::json pcs = nlohmann::json::array();
  for (const auto& k : grid.pcs_grid) pcs.push_back(pcs_to_json(k));
  return {{"name", name},
          {"feature_kind", to_string(kind)},
          {"classifier", classifier == ClassifierKind::kSvm ? "svm" : "lda"},
          {"c_grid", grid.c_grid},
          {"pcs_grid", pcs},
          {"class_weighting", grid.class_weighting}};
}

SystemSpec SystemSpec::from_json(const nlohmann::json& j) {
  SystemSpec s;
  if (j.contains("name") && !j.contains("feature_kind")) return system_by_name(j["name"].get<std::string>());
  s.name = j.value("name", std::string("custom"));
  s.kind = parse_feature_kind(j.at("feature_kind").get<std::string>());
  const std::string cls = j.value("classifier", std::string("svm"));
  if (cls != "svm" && cls != "lda") throw Error(ErrorCode::kSchema, "unknown classifier '" + cls + "'");
  s.classifier = cls == "svm" ? ClassifierKind::kSvm : ClassifierKind::kLda;
  if (j.contains("c_grid")) s.grid.c_grid = j["c_grid"].get<std::vector<double>>();
  if (j.contains("pcs_grid")) {
    s.grid.pcs_grid.clear();
    for (const auto& v : j["pcs_grid"]) {
      s.grid.pcs_grid.push_back(v.is_null() ? std::nullopt : std::optional<Eigen::Index>(v.get<Eigen::Index>()));
    }
  }
  s.grid.class_weighting = j.value("class_weighting", true);
  return s;
}

const std::vector<std::string>& system_names() {
  static const std::vector<std::string> names = {"msr_svm",        "msr_pca_svm",  "lld_svm",      "lld_pca_svm",
                                                 "logmelspec_svm", "prosodic_lda", "embedding_lda"};
  return names;
}

SystemSpec system_by_name(std::string_view name) {
  SystemSpec s;
  s.name = std::string(name);
  if (name == "msr_svm") {
    s.kind = FeatureKind::kMsr;
    s.grid.pcs_grid = {std::nullopt};
  } else if (name == "msr_pca_svm") {
    s.kind = FeatureKind::kMsr;
    s.grid.pcs_grid = {100};
  } else if (name == "lld_svm") {
    s.kind = FeatureKind::kLldCompact;
    s.grid.pcs_grid = {std::nullopt};
  } else if (name == "lld_pca_svm") {
    s.kind = FeatureKind::kLldCompact;
    s.grid.pcs_grid = {100, 150, 200, 250, 300};
  } else if (name == "logmelspec_svm") {
    s.kind = FeatureKind::kLogmelspecStats;
    s.grid.pcs_grid = {std::nullopt};
  } else if (name == "prosodic_lda") {
    s.kind = FeatureKind::kProsodic;
    s.classifier = ClassifierKind::kLda;
    s.grid.pcs_grid = {std::nullopt};
  } else if (name == "embedding_lda") {
    s.kind = FeatureKind::kProxyEmbedding;
    s.classifier = ClassifierKind::kLda;
    s.grid.pcs_grid = {std::nullopt};
  } else {
    throw Error(ErrorCode::kInvalidArgument, "unknown system '" + std::string(name) + "'");
  }
  return s;
}

bool is_forbidden_pairing(std::string_view a, std::string_view b) {
  const std::string x = lower(a), y = lower(b);
  return (x == "css" && y == "cambridge") || (x == "cambridge" && y == "css");
}

nlohmann::json ScenarioConfig::to_json() const {
  nlohmann::json j = {{"code", code},
                      {"train_dataset", train_dataset},
                      {"test_dataset", effective_test_dataset()},
                      {"system", system.to_json()},
                      {"seed", seed},
                      {"n_bootstrap", n_bootstrap},
                      {"mcadams", mcadams.to_json()}};
  j["augmentation"] = augmentation ? nlohmann::json{{"dataset", augmentation->dataset},
                                                    {"condition", augmentation->condition}}
                                   : nlohmann::json(nullptr);
  return j;
}

ScenarioConfig ScenarioConfig::from_json(const nlohmann::json& j) {
  ScenarioConfig c;
  c.code = j.value("code", c.code);
  c.train_dataset = j.at("train_dataset").get<std::string>();
  c.test_dataset = j.value("test_dataset", std::string());
  if (c.test_dataset == c.train_dataset) c.test_dataset.clear();
  c.system = SystemSpec::from_json(j.at("system"));
  c.seed = j.at("seed").get<std::uint64_t>();
  c.n_bootstrap = j.value("n_bootstrap", c.n_bootstrap);
  if (j.contains("mcadams")) c.mcadams = McAdamsConfig::from_json(j["mcadams"]);
  if (j.contains("augmentation") && !j["augmentation"].is_null()) {
    c.augmentation = AugmentationSpec{j["augmentation"].at("dataset").get<std::string>(),
                                      j["augmentation"].value("condition", std::string("clean"))};
  }
  return c;
}

nlohmann::json ScenarioResult::to_json() const {
  nlohmann::json j = {{"code", code},
                      {"system", system},
                      {"train_condition", train_condition},
                      {"test_condition", test_condition},
                      {"train_dataset", train_dataset},
                      {"test_dataset", test_dataset},
                      {"auc", auc.to_json()},
                      {"fingerprint", fingerprint},
                      {"counts", {{"train", n_train}, {"augment", n_augment}, {"valid", n_valid}, {"test", n_test}}},
                      {"selected",
                       {{"c", selected.c},
                        {"requested_pcs", pcs_to_json(selected.requested_pcs)},
                        {"effective_pcs", pcs_to_json(selected.effective_pcs)},
                        {"validation_auc", selected.validation_auc}}},
                      {"warnings", warnings},
                      {"audit", {{"fit_ids", fit_ids}, {"valid_ids", valid_ids}, {"test_ids", test_ids}}}};
  j["augmentation"] = augmentation ? nlohmann::json{{"dataset", augmentation->dataset},
                                                    {"condition", augmentation->condition}}
                                   : nlohmann::json(nullptr);
  return j;
}

fs::path default_cache_dir() {
  if (const char* env = std::getenv("VPDIAG_CACHE_DIR"); env != nullptr && *env != '\0') return env;
  return fs::temp_directory_path() / "vpdiag-cache";
}

Harness::Harness(HarnessOptions options) : options_(std::move(options)) {
  if (options_.cache_dir.empty()) options_.cache_dir = default_cache_dir();
  options_.jobs = std::max(1, options_.jobs);
}

void Harness::add_dataset(DatasetManifest manifest) {
  const std::string id = manifest.dataset_id;
  if (datasets_.count(id) != 0) throw Error(ErrorCode::kDuplicateId, "dataset '" + id + "' already loaded");
  datasets_.emplace(id, std::move(manifest));
}

const DatasetManifest& Harness::dataset(std::string_view id) const {
  const auto it = datasets_.find(id);
  if (it == datasets_.end()) throw Error(ErrorCode::kUnknownId, "dataset '" + std::string(id) + "' is not loaded");
  return it->second;
}

bool Harness::has_dataset(std::string_view id) const { return datasets_.find(id) != datasets_.end(); }

std::string Harness::file_hash(const fs::path& path) {
  const std::string key = path.string();
  {
    std::lock_guard lock(mutex_);
    if (const auto it = file_hashes_.find(key); it != file_hashes_.end()) return it->second;
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kMissingFile, "cannot read " + key);
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string h = hex64(fnv1a(bytes));
  std::lock_guard lock(mutex_);
  file_hashes_.emplace(key, h);
  return h;
}

std::vector<std::string> Harness::missing_audio(const DatasetManifest& ds,
                                                const std::vector<const ManifestRow*>& rows,
                                                const std::string& condition) const {
  const std::string source = condition == "mcadams" ? "clean" : condition;
  std::vector<std::string> missing;
  for (const ManifestRow* row : rows) {
    const auto it = row->audio.find(source);
    if (it == row->audio.end() || !fs::exists(it->second)) {
      missing.push_back(qualified(ds, *row) + " (" + column_for_condition(source) + ")");
    }
  }
  return missing;
}

fs::path Harness::audio_path(const ManifestRow& row, const std::string& condition, const McAdamsConfig& mcadams) {
  const std::string source = condition == "mcadams" ? "clean" : condition;
  const auto it = row.audio.find(source);
  if (it == row.audio.end()) {
    throw Error(ErrorCode::kUnmetDependency, "no " + column_for_condition(source) + " audio for '" +
                                                 row.utterance_id + "'");
  }
  if (condition != "mcadams") return it->second;

  const std::string key = file_hash(it->second) + "_" + hex64(fnv1a(mcadams.fingerprint()));
  const fs::path dir = options_.cache_dir / "mcadams";
  const fs::path target = dir / (key + ".wav");
  if (fs::exists(target)) return target;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::kUnwritablePath, "cannot create cache directory " + dir.string());
  const AudioBuffer anon = anonymize(load_canonical(it->second), mcadams);
  std::ostringstream tmp_name;
  tmp_name << key << ".tmp" << std::hash<std::thread::id>{}(std::this_thread::get_id());
  const fs::path tmp = dir / tmp_name.str();
  write_wav(anon, tmp);
  fs::rename(tmp, target, ec);
  if (ec) throw Error(ErrorCode::kUnwritablePath, "cannot move cache entry into " + target.string());
  std::lock_guard lock(mutex_);
  ++anonymizations_;
  return target;
}

Eigen::VectorXd Harness::features(const ManifestRow& row, const std::string& condition, FeatureKind kind,
                                  const McAdamsConfig& mcadams) {
  const fs::path path = audio_path(row, condition, mcadams);
  const std::string key = file_hash(path) + "|" + condition + "|" + to_string(kind) + "|" + kFeatureVersion;
  {
    std::lock_guard lock(mutex_);
    if (const auto it = features_.find(key); it != features_.end()) return it->second;
  }
  Eigen::VectorXd values = extract_features(kind, load_canonical(path)).values;
  std::lock_guard lock(mutex_);
  return features_.emplace(key, std::move(values)).first->second;
}

LabelledSet Harness::build_set(const DatasetManifest& ds, const std::vector<const ManifestRow*>& rows,
                               const std::string& condition, FeatureKind kind, const McAdamsConfig& mcadams,
                               int jobs) {
  LabelledSet set;
  set.x.resize(static_cast<Eigen::Index>(rows.size()), feature_length(kind));
  set.y.resize(static_cast<Eigen::Index>(rows.size()));
  set.ids.resize(rows.size());
  parallel_for(rows.size(), jobs, [&](std::size_t i) {
    const auto r = static_cast<Eigen::Index>(i);
    const Eigen::VectorXd v = features(*rows[i], condition, kind, mcadams);
    set.x.row(r) = v.transpose();
    set.y[r] = rows[i]->label == Label::kPositive ? 1.0 : -1.0;
    set.ids[i] = qualified(ds, *rows[i]);
  });
  return set;
}

std::size_t Harness::feature_cache_size() const {
  std::lock_guard lock(mutex_);
  return features_.size();
}

std::size_t Harness::anonymizations_run() const {
  std::lock_guard lock(mutex_);
  return anonymizations_;
}

namespace {

bool has_both_classes(const std::vector<const ManifestRow*>& rows) {
  bool pos = false, neg = false;
  for (const ManifestRow* r : rows) (r->label == Label::kPositive ? pos : neg) = true;
  return pos && neg;
}

/// Seeded 80/20 speaker-disjoint split of a development pool.
std::pair<std::vector<const ManifestRow*>, std::vector<const ManifestRow*>> split_development(
    const std::vector<const ManifestRow*>& pool, std::uint64_t seed) {
  std::map<std::string, std::vector<const ManifestRow*>> groups;
  for (const ManifestRow* r : pool) groups[r->speaker_id.value_or("utt:" + r->utterance_id)].push_back(r);
  std::vector<std::string> names;
  for (const auto& [name, rows] : groups) names.push_back(name);
  const std::size_t n_valid = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(0.2 * names.size())));
  if (names.size() < 2) throw Error(ErrorCode::kSingleClass, "development pool too small to split");
  for (std::uint64_t attempt = 0; attempt < 100; ++attempt) {
    std::vector<std::string> order = names;
    Rng(mix_seed(seed, attempt)).shuffle(order.begin(), order.end());
    const std::set<std::string> valid_names(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_valid));
    std::vector<const ManifestRow*> fit, valid;
    for (const ManifestRow* r : pool) {
      (valid_names.count(r->speaker_id.value_or("utt:" + r->utterance_id)) ? valid : fit).push_back(r);
    }
    if (has_both_classes(fit) && has_both_classes(valid)) return {fit, valid};
  }
  throw Error(ErrorCode::kSingleClass, "no two-class speaker-disjoint validation split found in 100 draws");
}

void append(LabelledSet& into, const LabelledSet& extra) {
  if (extra.x.rows() == 0) return;
  const Eigen::Index n0 = into.x.rows();
  FeatureMatrix x(n0 + extra.x.rows(), into.x.cols());
  x << into.x, extra.x;
  Eigen::VectorXd y(n0 + extra.y.size());
  y << into.y, extra.y;
  into.x = std::move(x);
  into.y = std::move(y);
  into.ids.insert(into.ids.end(), extra.ids.begin(), extra.ids.end());
}

ScenarioResult execute(Harness& harness, const ScenarioConfig& config, int jobs) {
  const auto start = std::chrono::steady_clock::now();
  const ScenarioConditions conds = resolve_scenario(config.code);
  const DatasetManifest& train_ds = harness.dataset(config.train_dataset);
  const DatasetManifest& test_ds = harness.dataset(config.effective_test_dataset());
  if (config.n_bootstrap < 0) throw Error(ErrorCode::kInvalidArgument, "n_bootstrap must be non-negative");

  std::vector<const ManifestRow*> fit_rows = train_ds.partition(Partition::kTrain);
  std::vector<const ManifestRow*> valid_rows = train_ds.partition(Partition::kValid);
  const std::vector<const ManifestRow*> test_rows = test_ds.partition(Partition::kTest);
  if (fit_rows.empty()) throw Error(ErrorCode::kEmptyInput, "dataset '" + train_ds.dataset_id + "' has no train rows");
  if (test_rows.empty()) throw Error(ErrorCode::kEmptyInput, "dataset '" + test_ds.dataset_id + "' has no test rows");
  ScenarioResult result;
  if (valid_rows.empty()) {
    auto [fit, valid] = split_development(fit_rows, mix_seed(config.seed, 3));
    fit_rows = std::move(fit);
    valid_rows = std::move(valid);
    result.warnings.push_back("no valid partition; tuned on a seeded 80/20 speaker-disjoint split of train");
  }

  const DatasetManifest* aug_ds = nullptr;
  std::vector<const ManifestRow*> aug_rows;
  if (config.augmentation) {
    aug_ds = &harness.dataset(config.augmentation->dataset);
    aug_rows = aug_ds->partition(Partition::kTrain);
    const auto extra = aug_ds->partition(Partition::kValid);
    aug_rows.insert(aug_rows.end(), extra.begin(), extra.end());
  }

  std::vector<std::string> missing;
  auto collect = [&](const DatasetManifest& ds, const std::vector<const ManifestRow*>& rows, const std::string& c) {
    const auto m = harness.missing_audio(ds, rows, c);
    missing.insert(missing.end(), m.begin(), m.end());
  };
  collect(train_ds, fit_rows, conds.train);
  collect(train_ds, valid_rows, conds.train);
  collect(test_ds, test_rows, conds.test);
  if (aug_ds != nullptr) collect(*aug_ds, aug_rows, config.augmentation->condition);
  if (!missing.empty()) {
    std::ostringstream msg;
    msg << "scenario " << config.code << " needs audio that is not available for " << missing.size()
        << " utterance(s):";
    for (const auto& m : missing) msg << "\n  " << m;
    throw Error(ErrorCode::kUnmetDependency, msg.str());
  }

  const FeatureKind kind = config.system.kind;
  LabelledSet train = harness.build_set(train_ds, fit_rows, conds.train, kind, config.mcadams, jobs);
  const LabelledSet valid = harness.build_set(train_ds, valid_rows, conds.train, kind, config.mcadams, jobs);
  const LabelledSet test = harness.build_set(test_ds, test_rows, conds.test, kind, config.mcadams, jobs);
  if (aug_ds != nullptr) {
    const LabelledSet extra =
        harness.build_set(*aug_ds, aug_rows, config.augmentation->condition, kind, config.mcadams, jobs);
    result.n_augment = static_cast<std::size_t>(extra.x.rows());
    append(train, extra);
  }
  std::vector<std::string> fitting_ids = train.ids;
  fitting_ids.insert(fitting_ids.end(), valid.ids.begin(), valid.ids.end());
  check_disjoint(fitting_ids, test.ids);

  Pipeline pipeline;
  if (config.system.classifier == ClassifierKind::kSvm) {
    GridSpec grid = config.system.grid;
    grid.seed = mix_seed(config.seed, 1);
    GridSearchResult gs = grid_search(train, valid, grid, kind);
    result.selected = gs.best_entry;
    result.warnings.insert(result.warnings.end(), gs.warnings.begin(), gs.warnings.end());
    pipeline = std::move(gs.best);
  } else {
    PipelineConfig pc;
    pc.classifier = ClassifierKind::kLda;
    pc.seed = mix_seed(config.seed, 1);
    pipeline = fit_pipeline(train.x, train.y, pc, kind);
    result.selected.validation_auc = auc_roc(pipeline.score(valid.x), valid.y);
  }
  const Eigen::VectorXd scores = pipeline.score(test.x);

  result.code = config.code;
  result.system = config.system.name;
  result.train_condition = conds.train;
  result.test_condition = conds.test;
  result.train_dataset = train_ds.dataset_id;
  result.test_dataset = test_ds.dataset_id;
  result.augmentation = config.augmentation;
  result.auc = bootstrap_ci(scores, test.y, config.n_bootstrap, mix_seed(config.seed, 2));
  result.n_train = static_cast<std::size_t>(train.x.rows());
  result.n_valid = static_cast<std::size_t>(valid.x.rows());
  result.n_test = static_cast<std::size_t>(test.x.rows());
  result.fit_ids = train.ids;
  result.valid_ids = valid.ids;
  result.test_ids = test.ids;

  nlohmann::json identity = config.to_json();
  identity["code_version"] = kCodeVersion;
  identity["feature_version"] = kFeatureVersion;
  identity["dataset_hashes"] = {{"train", train_ds.content_hash()},
                                {"test", test_ds.content_hash()},
                                {"augmentation", aug_ds != nullptr ? aug_ds->content_hash() : ""}};
  result.fingerprint = hex64(fnv1a(identity.dump()));
  result.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

void check_cross(const ScenarioConfig& config) {
  const std::string& test = config.effective_test_dataset();
  if (is_forbidden_pairing(config.train_dataset, test)) {
    throw Error(ErrorCode::kForbiddenPairing,
                "datasets '" + config.train_dataset + "' and '" + test +
                    "' cannot be paired: CSS is a subset of Cambridge, so cross-dataset results would be "
                    "contaminated");
  }
}

void check_augmentation(const ScenarioConfig& config) {
  if (!config.augmentation) throw Error(ErrorCode::kInvalidArgument, "no augmentation spec in config");
  const std::string& ext = config.augmentation->dataset;
  if (ext == config.train_dataset || ext == config.effective_test_dataset()) {
    throw Error(ErrorCode::kInvalidArgument,
                "augmentation dataset '" + ext + "' must differ from the train and test datasets");
  }
  const std::string& c = config.augmentation->condition;
  if (c != "clean" && c != "mcadams" && !is_external_condition(c)) {
    throw Error(ErrorCode::kInvalidArgument, "invalid augmentation condition '" + c + "'");
  }
}

}  // namespace

ScenarioResult run_scenario(Harness& harness, const ScenarioConfig& config, int jobs) {
  if (config.effective_test_dataset() != config.train_dataset) return run_cross_dataset(harness, config, jobs);
  if (config.augmentation) return augment_training(harness, config, jobs);
  return execute(harness, config, resolve_jobs(harness, jobs));
}

ScenarioResult run_cross_dataset(Harness& harness, const ScenarioConfig& config, int jobs) {
  check_cross(config);
  if (config.effective_test_dataset() == config.train_dataset) {
    throw Error(ErrorCode::kInvalidArgument, "cross-dataset run needs two different datasets");
  }
  if (config.augmentation) check_augmentation(config);
  return execute(harness, config, resolve_jobs(harness, jobs));
}

ScenarioResult augment_training(Harness& harness, const ScenarioConfig& config, int jobs) {
  check_augmentation(config);
  check_cross(config);
  return execute(harness, config, resolve_jobs(harness, jobs));
}

double AugmentationStudy::unaugmented_change_pct() const {
  return 100.0 * (unaugmented.auc.auc - baseline_a.auc.auc) / baseline_a.auc.auc;
}

double AugmentationStudy::augmented_change_pct() const {
  return 100.0 * (augmented.auc.auc - baseline_a.auc.auc) / baseline_a.auc.auc;
}

nlohmann::json AugmentationStudy::to_json() const {
  return {{"baseline_a", baseline_a.to_json()},
          {"unaugmented", unaugmented.to_json()},
          {"augmented", augmented.to_json()},
          {"relative_change_pct",
           {{"unaugmented", unaugmented_change_pct()}, {"augmented", augmented_change_pct()}}}};
}

AugmentationStudy run_augmentation_study(Harness& harness, const ScenarioConfig& config, int jobs) {
  check_augmentation(config);
  AugmentationStudy study;
  ScenarioConfig plain = config;
  plain.augmentation.reset();
  ScenarioConfig baseline = plain;
  baseline.code = "A";
  study.baseline_a = run_scenario(harness, baseline, jobs);
  study.unaugmented = run_scenario(harness, plain, jobs);
  study.augmented = run_scenario(harness, config, jobs);
  return study;
}

nlohmann::json MatrixConfig::to_json() const {
  nlohmann::json sys = nlohmann::json::array();
  for (const auto& s : systems) sys.push_back(s.to_json());
  nlohmann::json j = {{"codes", codes},
                      {"systems", sys},
                      {"train_dataset", train_dataset},
                      {"test_dataset", test_dataset.empty() ? train_dataset : test_dataset},
                      {"seed", seed},
                      {"n_bootstrap", n_bootstrap},
                      {"mcadams", mcadams.to_json()}};
  j["augmentation"] = augmentation ? nlohmann::json{{"dataset", augmentation->dataset},
                                                    {"condition", augmentation->condition}}
                                   : nlohmann::json(nullptr);
  return j;
}

std::size_t MatrixReport::failures() const {
  return static_cast<std::size_t>(
      std::count_if(cells.begin(), cells.end(), [](const MatrixCell& c) { return !c.result.has_value(); }));
}

std::optional<double> MatrixReport::scenario_average(const std::string& code) const {
  double sum = 0.0;
  int n = 0;
  for (const auto& c : cells) {
    if (c.code == code && c.result) {
      sum += c.result->auc.auc;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / n;
}

std::optional<double> MatrixReport::relative_change(const std::string& system, const std::string& code) const {
  const MatrixCell* base = nullptr;
  const MatrixCell* cell = nullptr;
  for (const auto& c : cells) {
    if (c.system != system) continue;
    if (c.code == "A") base = &c;
    if (c.code == code) cell = &c;
  }
  if (base == nullptr || cell == nullptr || !base->result || !cell->result || base->result->auc.auc == 0.0) {
    return std::nullopt;
  }
  return (cell->result->auc.auc - base->result->auc.auc) / base->result->auc.auc;
}

nlohmann::json MatrixReport::to_json() const {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  nlohmann::json j;
  j["format"] = "vpdiag-report";
  j["version"] = 1;
  j["code_version"] = kCodeVersion;
  j["config"] = config.to_json();
  std::string names;
  for (const auto& s : config.systems) names += (names.empty() ? "" : ", ") + s.name;
  j["averaging_note"] = "scenario averages are taken over the implemented systems in this run: " + names;
  nlohmann::json list = nlohmann::json::array();
  for (const auto& c : cells) {
    nlohmann::json cj = {{"code", c.code}, {"system", c.system}};
    if (c.result) {
      cj["status"] = "ok";
      cj["result"] = c.result->to_json();
    } else {
      cj["status"] = "failed";
      cj["error_code"] = c.error_code;
      cj["error"] = c.error;
    }
    list.push_back(std::move(cj));
  }
  j["cells"] = std::move(list);
  nlohmann::json avg = nlohmann::json::object(), rel = nlohmann::json::object();
  for (const auto& code : config.codes) avg[code] = opt(scenario_average(code));
  for (const auto& s : config.systems) {
    nlohmann::json row = nlohmann::json::object();
    for (const auto& code : config.codes) row[code] = opt(relative_change(s.name, code));
    rel[s.name] = std::move(row);
  }
  j["scenario_averages"] = std::move(avg);
  j["relative_change"] = std::move(rel);
  j["failures"] = failures();
  return j;
}

std::string MatrixReport::to_csv() const {
  std::ostringstream out;
  out << "code,system,status,train_condition,test_condition,train_dataset,test_dataset,auc,ci_low,ci_high,"
         "n_train,n_valid,n_test,relative_change,fingerprint,error_code\n";
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.10f", v);
    return std::string(buf);
  };
  for (const auto& c : cells) {
    const ScenarioConditions conds = resolve_scenario(c.code);
    out << c.code << ',' << c.system << ',' << (c.result ? "ok" : "failed") << ',' << conds.train << ','
        << conds.test << ',';
    if (c.result) {
      const auto& r = *c.result;
      const auto rel = relative_change(c.system, c.code);
      out << r.train_dataset << ',' << r.test_dataset << ',' << num(r.auc.auc) << ',' << num(r.auc.ci_low) << ','
          << num(r.auc.ci_high) << ',' << r.n_train << ',' << r.n_valid << ',' << r.n_test << ','
          << (rel ? num(*rel) : "") << ',' << r.fingerprint << ",\n";
    } else {
      out << config.train_dataset << ',' << (config.test_dataset.empty() ? config.train_dataset : config.test_dataset)
          << ",,,,,,,,," << c.error_code << '\n';
    }
  }
  return out.str();
}

MatrixReport run_matrix(Harness& harness, const MatrixConfig& config, int jobs) {
  MatrixReport report;
  report.config = config;
  for (const auto& code : config.codes) {
    for (const auto& system : config.systems) report.cells.push_back({code, system.name, std::nullopt, "", ""});
  }
  const int outer = resolve_jobs(harness, jobs);
  parallel_for(report.cells.size(), outer, [&](std::size_t i) {
    MatrixCell& cell = report.cells[i];
    ScenarioConfig sc;
    sc.code = cell.code;
    sc.train_dataset = config.train_dataset;
    sc.test_dataset = config.test_dataset;
    sc.system = config.systems[i % config.systems.size()];
    sc.augmentation = config.augmentation;
    sc.seed = config.seed;
    sc.n_bootstrap = config.n_bootstrap;
    sc.mcadams = config.mcadams;
    try {
      cell.result = run_scenario(harness, sc, 1);
    } catch (const Error& e) {
      cell.error_code = to_string(e.code());
      cell.error = e.what();
    } catch (const std::exception& e) {
      cell.error_code = "internal";
      cell.error = e.what();
    }
  });
  return report;
}

void emit_report(const MatrixReport& report, const fs::path& json_path) {
  const fs::path parent = json_path.has_parent_path() ? json_path.parent_path() : fs::path(".");
  std::error_code ec;
  fs::create_directories(parent, ec);
  auto write = [](const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
    if (!out) throw Error(ErrorCode::kUnwritablePath, "cannot write " + p.string());
  };
  write(json_path, report.to_json().dump(2) + "\n");
  fs::path csv = json_path;
  csv.replace_extension(".csv");
  write(csv, report.to_csv());
  nlohmann::json timing = nlohmann::json::array();
  for (const auto& c : report.cells) {
    timing.push_back({{"code", c.code},
                      {"system", c.system},
                      {"wall_clock_s", c.result ? nlohmann::json(c.result->wall_clock_s) : nlohmann::json(nullptr)}});
  }
  write(parent / (json_path.stem().string() + ".timing.json"), nlohmann::json{{"cells", timing}}.dump(2) + "\n");
}

nlohmann::json PrivacyReport::to_json() const {
  return {{"conditions", conditions.to_json()},
          {"threshold", threshold},
          {"eer", eer},
          {"same_speaker_mean", same_speaker_mean},
          {"same_speaker_misclassification", same_speaker_misclassification},
          {"genuine_pairs", genuine_pairs},
          {"impostor_pairs", impostor_pairs}};
}

PrivacyReport privacy_report(Harness& harness, const std::string& dataset, const std::vector<std::string>& conditions,
                             const McAdamsConfig& mcadams, int jobs) {
  if (conditions.empty() || conditions.front() != "clean") {
    throw Error(ErrorCode::kInvalidArgument, "privacy report needs clean as the first condition");
  }
  const DatasetManifest& ds = harness.dataset(dataset);
  std::vector<const ManifestRow*> rows;
  for (const auto& r : ds.rows) {
    if (!r.speaker_id) throw Error(ErrorCode::kSchema, "privacy report needs speaker ids ('" + r.utterance_id + "')");
    rows.push_back(&r);
  }
  std::vector<std::string> missing;
  for (const auto& c : conditions) {
    const auto m = harness.missing_audio(ds, rows, c);
    missing.insert(missing.end(), m.begin(), m.end());
  }
  if (!missing.empty()) {
    std::ostringstream msg;
    msg << "privacy report needs audio that is not available for " << missing.size() << " utterance(s):";
    for (const auto& m : missing) msg << "\n  " << m;
    throw Error(ErrorCode::kUnmetDependency, msg.str());
  }

  const int j = resolve_jobs(harness, jobs);
  std::vector<std::pair<std::string, EmbeddingSet>> sets;
  for (const auto& c : conditions) {
    const LabelledSet emb = harness.build_set(ds, rows, c, FeatureKind::kProxyEmbedding, mcadams, j);
    EmbeddingSet set;
    for (std::size_t i = 0; i < rows.size(); ++i) set[rows[i]->utterance_id] = emb.x.row(static_cast<Eigen::Index>(i)).transpose();
    sets.emplace_back(c, std::move(set));
  }

  const EmbeddingSet& clean = sets.front().second;
  std::vector<double> genuine, impostor;
  for (std::size_t a = 0; a < rows.size(); ++a) {
    for (std::size_t b = a + 1; b < rows.size(); ++b) {
      const double s = cosine_similarity(clean.at(rows[a]->utterance_id), clean.at(rows[b]->utterance_id));
      (*rows[a]->speaker_id == *rows[b]->speaker_id ? genuine : impostor).push_back(s);
    }
  }
  if (genuine.empty() || impostor.empty()) {
    throw Error(ErrorCode::kEmptyInput, "privacy report needs several utterances per speaker and several speakers");
  }
  PrivacyReport report;
  const ThresholdCalibration cal = calibrate_threshold(genuine, impostor);
  report.threshold = cal.threshold;
  report.eer = cal.eer;
  report.genuine_pairs = genuine.size();
  report.impostor_pairs = impostor.size();
  double sum = 0.0;
  for (double g : genuine) sum += g;
  report.same_speaker_mean = sum / static_cast<double>(genuine.size());
  report.same_speaker_misclassification = misclassification_rate(genuine, cal.threshold);
  report.conditions = similarity_report(sets, cal.threshold);
  return report;
}

}  // namespace vpdiag
