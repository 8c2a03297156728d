#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "vpdiag/anonymizer.hpp"
#include "vpdiag/evaluation.hpp"
#include "vpdiag/features.hpp"
#include "vpdiag/manifest.hpp"
#include "vpdiag/models.hpp"

namespace vpdiag {

inline constexpr const char* kCodeVersion = "vpdiag-0.1.0";

struct ScenarioConditions {
  std::string train;
  std::string test;
};

/// The thirteen codes in report order: A, B1-B3, C1-C6, D1-D3.
const std::vector<std::string>& scenario_codes();

/// A -> (clean, clean), B1 -> (clean, mcadams), ... The two GAN systems are
/// the external conditions external:ling-gan and external:ling-pros-gan.
/// Throws kUnknownScenario.
ScenarioConditions resolve_scenario(std::string_view code);

/// Feature kind plus classifier pipeline. SVM systems are tuned by
/// grid_search on the validation partition; LDA systems are fitted directly.
struct SystemSpec {
  std::string name;
  FeatureKind kind = FeatureKind::kMsr;
  ClassifierKind classifier = ClassifierKind::kSvm;
  GridSpec grid;

  nlohmann::json to_json() const;
  static SystemSpec from_json(const nlohmann::json& j);
};

/// msr_svm, msr_pca_svm, lld_svm, lld_pca_svm, logmelspec_svm,
/// prosodic_lda, embedding_lda.
const std::vector<std::string>& system_names();
SystemSpec system_by_name(std::string_view name);

/// The (CSS, Cambridge) pair in either order, compared case-insensitively.
bool is_forbidden_pairing(std::string_view a, std::string_view b);

struct AugmentationSpec {
  std::string dataset;
  std::string condition = "clean";
};

struct ScenarioConfig {
  std::string code = "A";
  std::string train_dataset;
  std::string test_dataset;  ///< empty means train_dataset
  SystemSpec system;
  std::optional<AugmentationSpec> augmentation;
  std::uint64_t seed = 0;
  int n_bootstrap = 1000;
  McAdamsConfig mcadams;

  const std::string& effective_test_dataset() const {
    return test_dataset.empty() ? train_dataset : test_dataset;
  }
  nlohmann::json to_json() const;
  static ScenarioConfig from_json(const nlohmann::json& j);
};

struct ScenarioResult {
  std::string code;
  std::string system;
  std::string train_condition;
  std::string test_condition;
  std::string train_dataset;
  std::string test_dataset;
  std::optional<AugmentationSpec> augmentation;
  AucResult auc;
  std::string fingerprint;
  std::size_t n_train = 0;  ///< includes augmentation rows
  std::size_t n_augment = 0;
  std::size_t n_valid = 0;
  std::size_t n_test = 0;
  GridEntry selected;
  std::vector<std::string> warnings;
  /// Audit trail, "<dataset>:<utterance>".
  std::vector<std::string> fit_ids;
  std::vector<std::string> valid_ids;
  std::vector<std::string> test_ids;
  /// Kept out of to_json so reports stay byte-identical across reruns.
  double wall_clock_s = 0.0;

  nlohmann::json to_json() const;
};

struct HarnessOptions {
  /// McAdams outputs are written here; defaults to $VPDIAG_CACHE_DIR or a
  /// directory under the system temp path.
  std::filesystem::path cache_dir;
  int jobs = 1;
};

std::filesystem::path default_cache_dir();

/// Holds the loaded manifests and the shared audio/feature cache. The cache
/// is a single-writer-per-key map: concurrent misses on one key compute the
/// same value and the first insert wins.
class Harness {
 public:
  explicit Harness(HarnessOptions options = {});

  void add_dataset(DatasetManifest manifest);
  const DatasetManifest& dataset(std::string_view id) const;
  bool has_dataset(std::string_view id) const;
  const HarnessOptions& options() const { return options_; }

  /// Path of the audio for `condition`. mcadams is derived from the clean
  /// file, written to the disk cache once and reused. Throws
  /// kUnmetDependency when an external condition has no file for the row.
  std::filesystem::path audio_path(const ManifestRow& row, const std::string& condition,
                                   const McAdamsConfig& mcadams);

  /// Rows missing audio for the condition, as "<dataset>:<id> (<column>)".
  std::vector<std::string> missing_audio(const DatasetManifest& ds,
                                         const std::vector<const ManifestRow*>& rows,
                                         const std::string& condition) const;

  Eigen::VectorXd features(const ManifestRow& row, const std::string& condition, FeatureKind kind,
                           const McAdamsConfig& mcadams);

  LabelledSet build_set(const DatasetManifest& ds, const std::vector<const ManifestRow*>& rows,
                        const std::string& condition, FeatureKind kind, const McAdamsConfig& mcadams,
                        int jobs);

  std::size_t feature_cache_size() const;
  std::size_t anonymizations_run() const;

 private:
  HarnessOptions options_;
  std::map<std::string, DatasetManifest, std::less<>> datasets_;
  mutable std::mutex mutex_;
  std::map<std::string, std::string> file_hashes_;
  std::map<std::string, Eigen::VectorXd> features_;
  std::size_t anonymizations_ = 0;

  std::string file_hash(const std::filesystem::path& path);
};

/// Within-dataset run (dispatches to run_cross_dataset / augment_training
/// when the config asks for them). Train and valid partitions use the
/// scenario's train condition, the test partition its test condition.
/// Without a valid partition, a seeded 80/20 speaker-disjoint split of the
/// train partition is used for tuning.
ScenarioResult run_scenario(Harness& harness, const ScenarioConfig& config, int jobs = -1);

/// Train+valid from train_dataset, test partition of test_dataset. Throws
/// kForbiddenPairing for (CSS, Cambridge) and kInvalidArgument when both
/// datasets are the same.
ScenarioResult run_cross_dataset(Harness& harness, const ScenarioConfig& config, int jobs = -1);

/// Adds the external dataset's train+valid rows, under the augmentation
/// condition, to the training pool. Throws kInvalidArgument when the
/// external dataset is the train or test dataset.
ScenarioResult augment_training(Harness& harness, const ScenarioConfig& config, int jobs = -1);

struct AugmentationStudy {
  ScenarioResult baseline_a;  ///< scenario A, no augmentation
  ScenarioResult unaugmented;
  ScenarioResult augmented;

  /// (AUC - AUC_A) / AUC_A in percent.
  double unaugmented_change_pct() const;
  double augmented_change_pct() const;
  nlohmann::json to_json() const;
};

/// Runs the baseline, the plain scenario and the augmented scenario in one go
/// so relative changes never depend on earlier reports.
AugmentationStudy run_augmentation_study(Harness& harness, const ScenarioConfig& config, int jobs = -1);

struct MatrixConfig {
  std::vector<std::string> codes = scenario_codes();
  std::vector<SystemSpec> systems;
  std::string train_dataset;
  std::string test_dataset;
  std::optional<AugmentationSpec> augmentation;
  std::uint64_t seed = 0;
  int n_bootstrap = 1000;
  McAdamsConfig mcadams;

  nlohmann::json to_json() const;
};

struct MatrixCell {
  std::string code;
  std::string system;
  std::optional<ScenarioResult> result;
  std::string error_code;  ///< empty on success
  std::string error;
};

struct MatrixReport {
  MatrixConfig config;
  std::vector<MatrixCell> cells;  ///< code-major, systems in config order

  std::size_t failures() const;
  /// Mean AUC over the successful cells of a code; nullopt if none.
  std::optional<double> scenario_average(const std::string& code) const;
  /// (AUC_code - AUC_A) / AUC_A for one system; nullopt if either failed.
  std::optional<double> relative_change(const std::string& system, const std::string& code) const;

  nlohmann::json to_json() const;
  std::string to_csv() const;
};

/// Every code x system cell; failures are recorded per cell.
MatrixReport run_matrix(Harness& harness, const MatrixConfig& config, int jobs = -1);

/// Writes <path> (JSON) and <path with .csv> plus wall-clock times to
/// <stem>.timing.json. Throws kUnwritablePath.
void emit_report(const MatrixReport& report, const std::filesystem::path& json_path);

struct PrivacyReport {
  SimilarityReport conditions;  ///< per-utterance pairing across conditions
  double threshold = 0.0;       ///< EER point of clean same- vs cross-speaker pairs
  double eer = 0.0;
  double same_speaker_mean = 0.0;  ///< clean, same speaker, different utterances
  double same_speaker_misclassification = 0.0;
  std::size_t genuine_pairs = 0;
  std::size_t impostor_pairs = 0;

  nlohmann::json to_json() const;
};

/// Proxy-embedding privacy evaluation over every row of a dataset. The first
/// condition must be clean. Requires speaker ids.
PrivacyReport privacy_report(Harness& harness, const std::string& dataset,
                             const std::vector<std::string>& conditions, const McAdamsConfig& mcadams,
                             int jobs = -1);

}  // namespace vpdiag
