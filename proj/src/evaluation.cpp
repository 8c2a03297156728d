#include "vpdiag/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include "vpdiag/error.hpp"
#include "vpdiag/models.hpp"
#include "vpdiag/random.hpp"
#include "vpdiag/spectral.hpp"

namespace vpdiag {

namespace {

struct ClassCounts {
  Eigen::Index pos = 0;
  Eigen::Index neg = 0;
};

ClassCounts count_classes(const Eigen::VectorXd& labels) {
  ClassCounts c;
  for (Eigen::Index i = 0; i < labels.size(); ++i) (labels[i] > 0.0 ? c.pos : c.neg)++;
  return c;
}

double auc_from_indices(const Eigen::VectorXd& scores, const Eigen::VectorXd& labels,
                        std::vector<Eigen::Index>& idx) {
  std::sort(idx.begin(), idx.end(),
            [&](Eigen::Index a, Eigen::Index b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0;
  double n_pos = 0.0, n_neg = 0.0;
  std::size_t i = 0;
  while (i < idx.size()) {
    std::size_t j = i;
    while (j + 1 < idx.size() && scores[idx[j + 1]] == scores[idx[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) {
      if (labels[idx[k]] > 0.0) {
        rank_sum += avg_rank;
        n_pos += 1.0;
      } else {
        n_neg += 1.0;
      }
    }
    i = j + 1;
  }
  return (rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg);
}

}  // namespace

double auc_roc(const Eigen::VectorXd& scores, const Eigen::VectorXd& labels) {
  if (scores.size() != labels.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "scores and labels differ in length");
  }
  const ClassCounts c = count_classes(labels);
  if (c.pos == 0 || c.neg == 0) {
    throw Error(ErrorCode::kSingleClass, "AUC needs both classes");
  }
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(scores.size()));
  std::iota(idx.begin(), idx.end(), 0);
  return auc_from_indices(scores, labels, idx);
}

nlohmann::json AucResult::to_json() const {
  return {{"auc", auc},           {"ci_low", ci_low}, {"ci_high", ci_high},
          {"n_bootstrap", n_bootstrap}, {"seed", seed}, {"redraws", redraws}};
}

AucResult bootstrap_ci(const Eigen::VectorXd& scores, const Eigen::VectorXd& labels,
                       int n_bootstrap, std::uint64_t seed, int max_redraws) {
  AucResult r;
  r.auc = auc_roc(scores, labels);
  r.n_bootstrap = n_bootstrap;
  r.seed = seed;
  if (n_bootstrap <= 0) {
    r.ci_low = r.ci_high = r.auc;
    return r;
  }
  const auto n = static_cast<std::uint64_t>(scores.size());
  Eigen::VectorXd aucs(n_bootstrap);
  Eigen::VectorXd s(scores.size()), l(labels.size());
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  for (int b = 0; b < n_bootstrap; ++b) {
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(b)));
    for (;;) {
      ClassCounts c;
      for (std::uint64_t i = 0; i < n; ++i) {
        const auto k = static_cast<Eigen::Index>(rng.below(n));
        s[static_cast<Eigen::Index>(i)] = scores[k];
        l[static_cast<Eigen::Index>(i)] = labels[k];
        (labels[k] > 0.0 ? c.pos : c.neg)++;
      }
      if (c.pos > 0 && c.neg > 0) break;
      if (++r.redraws > max_redraws) {
        throw Error(ErrorCode::kRetryBudget,
                    "bootstrap resamples keep collapsing to one class; set too small");
      }
    }
    std::iota(idx.begin(), idx.end(), 0);
    aucs[b] = auc_from_indices(s, l, idx);
  }
  r.ci_low = std::min(spectral::percentile(aucs, 0.025), r.auc);
  r.ci_high = std::max(spectral::percentile(aucs, 0.975), r.auc);
  return r;
}

double cosine_similarity(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "cosine similarity of different lengths");
  }
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) {
    throw Error(ErrorCode::kInvalidArgument, "cosine similarity of a zero vector");
  }
  if (a == b) return 1.0;
  return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

ThresholdCalibration calibrate_threshold(const std::vector<double>& genuine,
                                         const std::vector<double>& impostor) {
  if (genuine.empty() || impostor.empty()) {
    throw Error(ErrorCode::kEmptyInput, "threshold calibration needs both pair sets");
  }
  std::vector<double> g = genuine, im = impostor;
  std::sort(g.begin(), g.end());
  std::sort(im.begin(), im.end());
  std::vector<double> uniq = g;
  uniq.insert(uniq.end(), im.begin(), im.end());
  std::sort(uniq.begin(), uniq.end());
  uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());

  std::vector<double> cuts;
  cuts.push_back(uniq.front() - 1.0);
  for (std::size_t i = 0; i + 1 < uniq.size(); ++i) cuts.push_back(0.5 * (uniq[i] + uniq[i + 1]));
  cuts.push_back(uniq.back() + 1.0);

  ThresholdCalibration best;
  double best_gap = std::numeric_limits<double>::infinity();
  for (double t : cuts) {
    // Rejected genuine: similarity < t. Accepted impostor: similarity >= t.
    const double frr = static_cast<double>(std::lower_bound(g.begin(), g.end(), t) - g.begin()) /
                       static_cast<double>(g.size());
    const double far = static_cast<double>(im.end() - std::lower_bound(im.begin(), im.end(), t)) /
                       static_cast<double>(im.size());
    const double gap = std::abs(far - frr);
    const double eer = 0.5 * (far + frr);
    if (gap < best_gap - 1e-15 || (std::abs(gap - best_gap) <= 1e-15 && eer < best.eer)) {
      best_gap = gap;
      best.threshold = t;
      best.eer = eer;
    }
  }
  return best;
}

double misclassification_rate(const std::vector<double>& similarities, double threshold) {
  if (similarities.empty()) throw Error(ErrorCode::kEmptyInput, "no pairs to score");
  const auto below = std::count_if(similarities.begin(), similarities.end(),
                                   [&](double s) { return s < threshold; });
  return static_cast<double>(below) / static_cast<double>(similarities.size());
}

double misclassification_rate(const std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>>& pairs,
                              double threshold) {
  std::vector<double> sims;
  sims.reserve(pairs.size());
  for (const auto& [a, b] : pairs) sims.push_back(cosine_similarity(a, b));
  return misclassification_rate(sims, threshold);
}

nlohmann::json SimilarityReport::to_json() const {
  nlohmann::json j;
  j["conditions"] = conditions;
  j["threshold"] = threshold;
  j["utterances"] = utterances;
  nlohmann::json sim = nlohmann::json::array(), mis = nlohmann::json::array();
  for (Eigen::Index i = 0; i < mean_similarity.rows(); ++i) {
    std::vector<double> srow, mrow;
    for (Eigen::Index k = 0; k < mean_similarity.cols(); ++k) {
      srow.push_back(mean_similarity(i, k));
      mrow.push_back(misclassification(i, k));
    }
    sim.push_back(srow);
    mis.push_back(mrow);
  }
  j["mean_similarity"] = sim;
  j["misclassification_rate"] = mis;
  return j;
}

std::string SimilarityReport::to_csv() const {
  std::ostringstream out;
  out << "condition_a,condition_b,mean_similarity,misclassification_rate\n";
  char buf[96];
  for (std::size_t i = 0; i < conditions.size(); ++i) {
    for (std::size_t k = 0; k < conditions.size(); ++k) {
      std::snprintf(buf, sizeof buf, "%.17g,%.17g",
                    mean_similarity(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)),
                    misclassification(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)));
      out << conditions[i] << ',' << conditions[k] << ',' << buf << '\n';
    }
  }
  return out.str();
}

SimilarityReport similarity_report(const std::vector<std::pair<std::string, EmbeddingSet>>& conditions,
                                   double threshold) {
  if (conditions.empty()) throw Error(ErrorCode::kEmptyInput, "no conditions");
  std::set<std::string> all;
  for (const auto& [name, set] : conditions) {
    for (const auto& [id, v] : set) all.insert(id);
  }
  std::string missing;
  for (const auto& [name, set] : conditions) {
    for (const auto& id : all) {
      if (set.count(id) == 0) missing += (missing.empty() ? "" : ", ") + name + ":" + id;
    }
  }
  if (!missing.empty()) {
    throw Error(ErrorCode::kUnknownId, "embedding ids do not align across conditions: " + missing);
  }
  if (all.empty()) throw Error(ErrorCode::kEmptyInput, "no utterances to compare");

  SimilarityReport r;
  const auto c = static_cast<Eigen::Index>(conditions.size());
  r.mean_similarity.resize(c, c);
  r.misclassification.resize(c, c);
  r.threshold = threshold;
  r.utterances = all.size();
  for (const auto& [name, set] : conditions) r.conditions.push_back(name);
  for (Eigen::Index i = 0; i < c; ++i) {
    for (Eigen::Index k = 0; k < c; ++k) {
      std::vector<double> sims;
      for (const auto& id : all) {
        sims.push_back(cosine_similarity(conditions[static_cast<std::size_t>(i)].second.at(id),
                                         conditions[static_cast<std::size_t>(k)].second.at(id)));
      }
      r.mean_similarity(i, k) =
          std::accumulate(sims.begin(), sims.end(), 0.0) / static_cast<double>(sims.size());
      r.misclassification(i, k) = misclassification_rate(sims, threshold);
    }
  }
  return r;
}

nlohmann::json TimingReport::to_json() const {
  return {{"method", method},         {"dataset", dataset},   {"mean_s", mean_s},
          {"std_s", std_s},           {"files", files},       {"failures", failures},
          {"failed_files", failed_files}, {"samples_s", samples_s},
          {"hardware_note", hardware_note}};
}

std::string hardware_note() {
  std::string model = "unknown cpu";
  std::ifstream cpu("/proc/cpuinfo");
  std::string line;
  while (std::getline(cpu, line)) {
    if (line.rfind("model name", 0) == 0) {
      const auto colon = line.find(':');
      if (colon != std::string::npos) model = line.substr(colon + 2);
      break;
    }
  }
  return model + ", " + std::to_string(std::thread::hardware_concurrency()) + " hardware threads";
}

TimingReport timing_benchmark(const std::string& method,
                              const std::function<AudioBuffer(const AudioBuffer&)>& process,
                              const std::vector<std::filesystem::path>& files,
                              const std::filesystem::path& out_dir, const std::string& dataset) {
  TimingReport r;
  r.method = method;
  r.dataset = dataset;
  r.hardware_note = hardware_note();
  std::filesystem::create_directories(out_dir);
  for (const auto& file : files) {
    try {
      const auto start = std::chrono::steady_clock::now();
      const AudioBuffer in = load_canonical(file);
      const AudioBuffer out = process(in);
      write_wav(out, out_dir / file.filename());
      r.samples_s.push_back(
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
    } catch (const Error&) {
      ++r.failures;
      r.failed_files.push_back(file.string());
    }
  }
  r.files = r.samples_s.size();
  if (!r.samples_s.empty()) {
    const Eigen::Map<const Eigen::VectorXd> s(r.samples_s.data(),
                                              static_cast<Eigen::Index>(r.samples_s.size()));
    r.mean_s = s.mean();
    r.std_s = std::sqrt((s.array() - r.mean_s).square().mean());
  }
  return r;
}

Eigen::MatrixXd project_2d(const Eigen::MatrixXd& features) {
  if (features.rows() < 3) {
    throw Error(ErrorCode::kInvalidArgument, "projection needs at least 3 samples");
  }
  const Eigen::MatrixXd centred = features.rowwise() - features.colwise().mean();
  Eigen::MatrixXd coords = Eigen::MatrixXd::Zero(features.rows(), 2);
  if (features.cols() == 0) return coords;
  const SymmetricEigen eig =
      jacobi_eigen(centred.transpose() * centred / static_cast<double>(features.rows() - 1));
  const double top = eig.values[0];
  if (top <= 0.0) return coords;
  coords.col(0) = centred * eig.vectors.col(0);
  if (eig.values.size() > 1 && eig.values[1] > 1e-12 * top) {
    coords.col(1) = centred * eig.vectors.col(1);
  }
  return coords;
}

double silhouette_score(const Eigen::MatrixXd& points, const std::vector<int>& clusters) {
  const Eigen::Index n = points.rows();
  if (static_cast<std::size_t>(n) != clusters.size() || n < 2) {
    throw Error(ErrorCode::kInvalidArgument, "silhouette needs one cluster id per point");
  }
  const std::set<int> ids(clusters.begin(), clusters.end());
  if (ids.size() < 2) throw Error(ErrorCode::kInvalidArgument, "silhouette needs two clusters");
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    std::map<int, std::pair<double, int>> dist;
    for (Eigen::Index k = 0; k < n; ++k) {
      if (k == i) continue;
      auto& slot = dist[clusters[static_cast<std::size_t>(k)]];
      slot.first += (points.row(i) - points.row(k)).norm();
      slot.second += 1;
    }
    const int own = clusters[static_cast<std::size_t>(i)];
    if (dist[own].second == 0) continue;  // singleton cluster scores 0
    const double a = dist[own].first / dist[own].second;
    double b = std::numeric_limits<double>::infinity();
    for (const auto& [id, slot] : dist) {
      if (id != own && slot.second > 0) b = std::min(b, slot.first / slot.second);
    }
    const double denom = std::max(a, b);
    total += denom > 0.0 ? (b - a) / denom : 0.0;
  }
  return total / static_cast<double>(n);
}

void write_projection_csv(const std::filesystem::path& path, const Eigen::MatrixXd& coords,
                          const std::vector<std::string>& ids,
                          const std::vector<std::string>& tags) {
  if (coords.rows() != static_cast<Eigen::Index>(ids.size()) || ids.size() != tags.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "projection rows, ids and tags differ in count");
  }
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kUnwritablePath, "cannot write " + path.string());
  out << "utterance_id,anonymization_tag,x,y\n";
  char buf[64];
  for (Eigen::Index i = 0; i < coords.rows(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g", coords(i, 0), coords(i, 1));
    out << ids[static_cast<std::size_t>(i)] << ',' << tags[static_cast<std::size_t>(i)] << ','
        << buf << '\n';
  }
}

}  // namespace vpdiag
