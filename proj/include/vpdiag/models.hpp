#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "vpdiag/features.hpp"

namespace vpdiag {

/// Rows are samples.
using FeatureMatrix = Eigen::MatrixXd;
/// Binary labels as +1 / -1.
using LabelVector = Eigen::VectorXd;

struct ScalerModel {
  Eigen::VectorXd mean;
  Eigen::VectorXd stddev;  ///< population convention
  Eigen::Array<bool, Eigen::Dynamic, 1> constant;  ///< passed through unscaled

  Eigen::Index dim() const { return mean.size(); }
};

ScalerModel scaler_fit(const FeatureMatrix& x);
FeatureMatrix scaler_apply(const ScalerModel& model, const FeatureMatrix& x);

struct PcaModel {
  Eigen::MatrixXd components;  ///< k x d, orthonormal rows
  Eigen::VectorXd explained_variance;
  Eigen::VectorXd explained_variance_ratio;
  Eigen::VectorXd mean;
  std::string warning;  ///< set when the requested k was reduced

  Eigen::Index k() const { return components.rows(); }
};

/// Symmetric eigendecomposition by cyclic Jacobi rotations. Eigenvalues are
/// returned in decreasing order; each eigenvector (column) is signed so its
/// largest-magnitude entry is positive.
struct SymmetricEigen {
  Eigen::VectorXd values;
  Eigen::MatrixXd vectors;
};
SymmetricEigen jacobi_eigen(const Eigen::MatrixXd& symmetric, double tolerance = 1e-14,
                            int max_sweeps = 100);

/// Top-k principal axes of the training covariance. k is reduced to the
/// numerical rank (at most n - 1) with a warning when it exceeds it.
PcaModel pca_fit(const FeatureMatrix& x, Eigen::Index n_components);
FeatureMatrix pca_transform(const PcaModel& model, const FeatureMatrix& x);
FeatureMatrix pca_inverse(const PcaModel& model, const FeatureMatrix& z);
/// Keeps the leading k components of an existing fit.
PcaModel pca_truncate(const PcaModel& model, Eigen::Index k);

struct SvmOptions {
  double c = 1.0;
  bool class_weighting = true;
  std::uint64_t seed = 0;
  int max_epochs = 1000;
  double tolerance = 1e-6;  ///< projected-gradient spread
  double gap_tolerance = 1e-4;  ///< relative duality gap
};

struct SvmModel {
  Eigen::VectorXd w;
  double b = 0.0;
  double c = 1.0;
  bool class_weighting = true;
  int epochs = 0;
  double primal = 0.0;
  double dual = 0.0;
  bool converged = false;
};

/// L2-regularized hinge loss, minimized in the dual by coordinate descent.
/// The bias is the weight of an appended constant-1 feature (so it is
/// regularized too); per-sample box bounds are C times the inverse class
/// frequency weight n / (2 n_class) when class_weighting is on.
SvmModel svm_train(const FeatureMatrix& x, const LabelVector& y, const SvmOptions& opts = {});
double svm_score(const SvmModel& model, const Eigen::VectorXd& x);
Eigen::VectorXd svm_scores(const SvmModel& model, const FeatureMatrix& x);
/// Per-sample box bound used by svm_train.
Eigen::VectorXd svm_sample_bounds(const LabelVector& y, double c, bool class_weighting);
/// 0.5 |w~|^2 + sum_i C_i hinge_i with w~ = (w, b).
double svm_primal(const SvmModel& model, const FeatureMatrix& x, const LabelVector& y);

struct LdaModel {
  Eigen::VectorXd projection;
  Eigen::VectorXd mean_pos;
  Eigen::VectorXd mean_neg;
  double lambda = 0.0;
};

/// Fisher direction (S + lambda I)^-1 (mu+ - mu-), S the pooled within-class
/// covariance and lambda = 1e-3 trace(S) / d.
LdaModel lda_fit(const FeatureMatrix& x, const LabelVector& y);
Eigen::VectorXd lda_scores(const LdaModel& model, const FeatureMatrix& x);

enum class ClassifierKind { kSvm, kLda };

struct PipelineConfig {
  ClassifierKind classifier = ClassifierKind::kSvm;
  double c = 1.0;
  std::optional<Eigen::Index> n_components;
  bool class_weighting = true;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
  static PipelineConfig from_json(const nlohmann::json& j);
};

inline constexpr int kPipelineVersion = 1;

/// scaler -> optional PCA -> classifier. Frozen once fitted.
struct Pipeline {
  FeatureKind kind = FeatureKind::kMsr;
  PipelineConfig config;
  ScalerModel scaler;
  std::optional<PcaModel> pca;
  std::variant<SvmModel, LdaModel> classifier;
  std::string fingerprint;
  bool frozen = false;

  Eigen::Index input_dim() const { return scaler.dim(); }
  Eigen::VectorXd score(const FeatureMatrix& x) const;
  /// Throws kFrozenPipeline on a fitted pipeline.
  void refit(const FeatureMatrix& x, const LabelVector& y);
};

Pipeline fit_pipeline(const FeatureMatrix& x, const LabelVector& y, const PipelineConfig& config,
                      FeatureKind kind = FeatureKind::kMsr);

nlohmann::json pipeline_to_json(const Pipeline& p);
Pipeline pipeline_from_json(const nlohmann::json& j);
void pipeline_save(const Pipeline& p, const std::filesystem::path& path);
Pipeline pipeline_load(const std::filesystem::path& path);

/// Labelled split: features, +1/-1 labels and utterance ids (for the overlap
/// check).
struct LabelledSet {
  FeatureMatrix x;
  LabelVector y;
  std::vector<std::string> ids;
};

struct GridEntry {
  double c = 0.0;
  std::optional<Eigen::Index> requested_pcs;
  std::optional<Eigen::Index> effective_pcs;
  double validation_auc = 0.0;
};

struct GridSearchResult {
  Pipeline best;
  GridEntry best_entry;
  std::vector<GridEntry> entries;
  std::vector<std::string> warnings;

  /// config, validation AUC; one row per evaluated grid point.
  std::string to_csv() const;
};

struct GridSpec {
  std::vector<double> c_grid = {1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0};
  /// nullopt means no PCA stage.
  std::vector<std::optional<Eigen::Index>> pcs_grid = {100, 150, 200, 250, 300, std::nullopt};
  bool class_weighting = true;
  std::uint64_t seed = 0;
};

/// Exhaustive search scored by validation AUC. Ties go to smaller C, then
/// fewer components (no PCA counts as the most). PC counts above the
/// training rank are capped and duplicates after capping evaluated once.
GridSearchResult grid_search(const LabelledSet& train, const LabelledSet& valid,
                             const GridSpec& grid = {}, FeatureKind kind = FeatureKind::kMsr);

/// Throws kSplitOverlap listing every id present in both.
void check_disjoint(const std::vector<std::string>& a, const std::vector<std::string>& b);

}  // namespace vpdiag
