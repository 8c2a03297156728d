#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "vpdiag/audio.hpp"

namespace vpdiag {

/// P(score_pos > score_neg) + P(tie) / 2 by the average-rank statistic.
/// labels are +1 / -1 (any positive value counts as positive).
double auc_roc(const Eigen::VectorXd& scores, const Eigen::VectorXd& labels);

struct AucResult {
  double auc = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  int n_bootstrap = 0;
  std::uint64_t seed = 0;
  int redraws = 0;

  nlohmann::json to_json() const;
};

/// Percentile bootstrap (2.5 / 97.5). Resample b draws from its own stream
/// mix_seed(seed, b); single-class resamples are redrawn from the same stream
/// up to max_redraws times in total before kRetryBudget is thrown.
AucResult bootstrap_ci(const Eigen::VectorXd& scores, const Eigen::VectorXd& labels,
                       int n_bootstrap, std::uint64_t seed, int max_redraws = 10000);

/// Throws kInvalidArgument on a zero vector or a length mismatch.
double cosine_similarity(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

struct ThresholdCalibration {
  double threshold = 0.0;
  double eer = 0.0;
};

/// Equal-error threshold over candidate cuts placed at midpoints between
/// adjacent unique similarity values (plus one below and one above all).
/// A pair is accepted as same-speaker when similarity >= threshold.
ThresholdCalibration calibrate_threshold(const std::vector<double>& genuine,
                                         const std::vector<double>& impostor);

/// Fraction of pairs whose similarity falls below the threshold.
double misclassification_rate(const std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>>& pairs,
                              double threshold);
double misclassification_rate(const std::vector<double>& similarities, double threshold);

/// Embeddings keyed by utterance id, one map per condition.
using EmbeddingSet = std::map<std::string, Eigen::VectorXd>;

struct SimilarityReport {
  std::vector<std::string> conditions;
  Eigen::MatrixXd mean_similarity;       ///< conditions x conditions
  Eigen::MatrixXd misclassification;     ///< conditions x conditions
  double threshold = 0.0;
  std::size_t utterances = 0;

  nlohmann::json to_json() const;
  std::string to_csv() const;
};

/// Per-utterance pairing: entry (i, j) averages cos(e_i[u], e_j[u]) over the
/// shared ids u. Throws kUnknownId naming ids missing from any condition.
SimilarityReport similarity_report(const std::vector<std::pair<std::string, EmbeddingSet>>& conditions,
                                   double threshold);

struct TimingReport {
  std::string method;
  std::string dataset;
  std::vector<double> samples_s;
  double mean_s = 0.0;
  double std_s = 0.0;
  std::size_t files = 0;
  std::size_t failures = 0;
  std::vector<std::string> failed_files;
  std::string hardware_note;

  nlohmann::json to_json() const;
};

/// Times read + process + write per file. Failures are counted and excluded.
TimingReport timing_benchmark(const std::string& method,
                              const std::function<AudioBuffer(const AudioBuffer&)>& process,
                              const std::vector<std::filesystem::path>& files,
                              const std::filesystem::path& out_dir,
                              const std::string& dataset = "");

std::string hardware_note();

/// PCA-to-2 coordinates, n x 2. A rank-1 input yields a zero second column.
Eigen::MatrixXd project_2d(const Eigen::MatrixXd& features);

/// Mean silhouette under Euclidean distance.
double silhouette_score(const Eigen::MatrixXd& points, const std::vector<int>& clusters);

void write_projection_csv(const std::filesystem::path& path, const Eigen::MatrixXd& coords,
                          const std::vector<std::string>& ids,
                          const std::vector<std::string>& tags);

}  // namespace vpdiag
