#include "vpdiag/models.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "vpdiag/error.hpp"
#include "vpdiag/evaluation.hpp"
#include "vpdiag/random.hpp"

namespace vpdiag {

namespace {

void require_rows(const FeatureMatrix& x, const char* what) {
  if (x.rows() == 0 || x.cols() == 0) {
    throw Error(ErrorCode::kEmptyInput, std::string(what) + ": empty feature matrix");
  }
}

void require_binary(const FeatureMatrix& x, const LabelVector& y) {
  require_rows(x, "training");
  if (y.size() != x.rows()) {
    throw Error(ErrorCode::kDimensionMismatch, "label count " + std::to_string(y.size()) +
                                                   " != sample count " + std::to_string(x.rows()));
  }
  Eigen::Index pos = 0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (y[i] == 1.0) {
      ++pos;
    } else if (y[i] != -1.0) {
      throw Error(ErrorCode::kInvalidArgument, "labels must be +1 or -1");
    }
  }
  if (pos == 0 || pos == y.size()) {
    throw Error(ErrorCode::kSingleClass, "training labels contain a single class");
  }
}

void require_dim(Eigen::Index got, Eigen::Index want, const char* stage) {
  if (got != want) {
    throw Error(ErrorCode::kDimensionMismatch, std::string(stage) + " expects dimension " +
                                                   std::to_string(want) + ", got " +
                                                   std::to_string(got));
  }
}

nlohmann::json vec_json(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

Eigen::VectorXd json_vec(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

ScalerModel scaler_fit(const FeatureMatrix& x) {
  require_rows(x, "scaler_fit");
  ScalerModel m;
  m.mean = x.colwise().mean().transpose();
  m.stddev = ((x.rowwise() - m.mean.transpose()).array().square().colwise().mean().sqrt())
                 .transpose();
  m.constant.resize(m.mean.size());
  for (Eigen::Index j = 0; j < m.mean.size(); ++j) {
    m.constant[j] = m.stddev[j] <= 1e-12 * std::max(1.0, std::abs(m.mean[j]));
  }
  return m;
}

FeatureMatrix scaler_apply(const ScalerModel& model, const FeatureMatrix& x) {
  require_dim(x.cols(), model.dim(), "scaler");
  FeatureMatrix out = x;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    if (!model.constant[j]) {
      out.col(j) = (x.col(j).array() - model.mean[j]) / model.stddev[j];
    }
  }
  return out;
}

SymmetricEigen jacobi_eigen(const Eigen::MatrixXd& symmetric, double tolerance, int max_sweeps) {
  const Eigen::Index n = symmetric.rows();
  Eigen::MatrixXd a = 0.5 * (symmetric + symmetric.transpose());
  Eigen::MatrixXd v = Eigen::MatrixXd::Identity(n, n);
  const double scale = std::max(a.norm(), std::numeric_limits<double>::min());

  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (Eigen::Index q = 1; q < n; ++q) off += a.col(q).head(q).squaredNorm();
    if (std::sqrt(2.0 * off) <= tolerance * scale) break;

    for (Eigen::Index p = 0; p < n - 1; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (std::abs(apq) <= 1e-300) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(1.0 + theta * theta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = t * c;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index i, Eigen::Index j) { return a(i, i) > a(j, j); });
  SymmetricEigen out;
  out.values.resize(n);
  out.vectors.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index src = order[static_cast<std::size_t>(i)];
    out.values[i] = a(src, src);
    Eigen::VectorXd col = v.col(src);
    Eigen::Index arg = 0;
    col.cwiseAbs().maxCoeff(&arg);
    if (col[arg] < 0.0) col = -col;
    out.vectors.col(i) = col;
  }
  return out;
}

PcaModel pca_fit(const FeatureMatrix& x, Eigen::Index n_components) {
  require_rows(x, "pca_fit");
  if (n_components < 1) {
    throw Error(ErrorCode::kInvalidArgument, "n_components must be positive");
  }
  const Eigen::Index n = x.rows();
  PcaModel m;
  m.mean = x.colwise().mean().transpose();
  const Eigen::MatrixXd centred = x.rowwise() - m.mean.transpose();
  const double denom = n > 1 ? static_cast<double>(n - 1) : 1.0;
  const SymmetricEigen eig = jacobi_eigen((centred.transpose() * centred) / denom);

  const double top = std::max(eig.values[0], 0.0);
  Eigen::Index rank = 0;
  for (Eigen::Index i = 0; i < eig.values.size(); ++i) {
    if (eig.values[i] > 1e-10 * top && eig.values[i] > 0.0) ++rank;
  }
  rank = std::min(rank, std::max<Eigen::Index>(n - 1, 1));
  Eigen::Index k = n_components;
  if (k > rank) {
    k = std::max<Eigen::Index>(rank, 1);
    m.warning = "requested " + std::to_string(n_components) + " components, data rank is " +
                std::to_string(rank) + "; using " + std::to_string(k);
  }
  m.components = eig.vectors.leftCols(k).transpose();
  m.explained_variance = eig.values.head(k).cwiseMax(0.0);
  const double total = eig.values.cwiseMax(0.0).sum();
  m.explained_variance_ratio =
      total > 0.0 ? Eigen::VectorXd(m.explained_variance / total) : Eigen::VectorXd::Zero(k);
  return m;
}

FeatureMatrix pca_transform(const PcaModel& model, const FeatureMatrix& x) {
  require_dim(x.cols(), model.mean.size(), "pca");
  return (x.rowwise() - model.mean.transpose()) * model.components.transpose();
}

FeatureMatrix pca_inverse(const PcaModel& model, const FeatureMatrix& z) {
  require_dim(z.cols(), model.k(), "pca inverse");
  return (z * model.components).rowwise() + model.mean.transpose();
}

PcaModel pca_truncate(const PcaModel& model, Eigen::Index k) {
  PcaModel out = model;
  k = std::clamp<Eigen::Index>(k, 1, model.k());
  out.components = model.components.topRows(k);
  out.explained_variance = model.explained_variance.head(k);
  out.explained_variance_ratio = model.explained_variance_ratio.head(k);
  return out;
}

Eigen::VectorXd svm_sample_bounds(const LabelVector& y, double c, bool class_weighting) {
  Eigen::VectorXd bounds = Eigen::VectorXd::Constant(y.size(), c);
  if (!class_weighting) return bounds;
  const double n = static_cast<double>(y.size());
  const double n_pos = static_cast<double>((y.array() > 0.0).count());
  const double n_neg = n - n_pos;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    bounds[i] = c * n / (2.0 * (y[i] > 0.0 ? n_pos : n_neg));
  }
  return bounds;
}

double svm_primal(const SvmModel& model, const FeatureMatrix& x, const LabelVector& y) {
  const Eigen::VectorXd bounds = svm_sample_bounds(y, model.c, model.class_weighting);
  const Eigen::VectorXd margins = y.cwiseProduct(svm_scores(model, x));
  double loss = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) loss += bounds[i] * std::max(0.0, 1.0 - margins[i]);
  return 0.5 * (model.w.squaredNorm() + model.b * model.b) + loss;
}

SvmModel svm_train(const FeatureMatrix& x, const LabelVector& y, const SvmOptions& opts) {
  require_binary(x, y);
  if (!(opts.c > 0.0)) throw Error(ErrorCode::kInvalidArgument, "C must be positive");
  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols();
  Eigen::MatrixXd xt(n, d + 1);
  xt << x, Eigen::VectorXd::Ones(n);
  const Eigen::VectorXd q = xt.rowwise().squaredNorm();
  const Eigen::VectorXd upper = svm_sample_bounds(y, opts.c, opts.class_weighting);

  Eigen::VectorXd alpha = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd w = Eigen::VectorXd::Zero(d + 1);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);

  SvmModel m;
  m.c = opts.c;
  m.class_weighting = opts.class_weighting;

  auto objectives = [&]() {
    double loss = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      loss += upper[i] * std::max(0.0, 1.0 - y[i] * xt.row(i).dot(w));
    }
    const double half_norm = 0.5 * w.squaredNorm();
    return std::make_pair(half_norm + loss, alpha.sum() - half_norm);
  };

  for (int epoch = 0; epoch < opts.max_epochs; ++epoch) {
    Rng rng(mix_seed(opts.seed, static_cast<std::uint64_t>(epoch)));
    rng.shuffle(order.begin(), order.end());
    double pg_max = -std::numeric_limits<double>::infinity();
    double pg_min = std::numeric_limits<double>::infinity();
    for (Eigen::Index i : order) {
      const double g = y[i] * xt.row(i).dot(w) - 1.0;
      double pg = g;
      if (alpha[i] <= 0.0) {
        pg = std::min(g, 0.0);
      } else if (alpha[i] >= upper[i]) {
        pg = std::max(g, 0.0);
      }
      pg_max = std::max(pg_max, pg);
      pg_min = std::min(pg_min, pg);
      if (std::abs(pg) > 1e-15) {
        const double old = alpha[i];
        alpha[i] = std::clamp(old - g / q[i], 0.0, upper[i]);
        w += (alpha[i] - old) * y[i] * xt.row(i).transpose();
      }
    }
    m.epochs = epoch + 1;
    if (pg_max - pg_min <= opts.tolerance) {
      const auto [primal, dual] = objectives();
      if (primal - dual <= opts.gap_tolerance * std::abs(primal)) {
        m.converged = true;
        break;
      }
    }
  }
  const auto [primal, dual] = objectives();
  m.primal = primal;
  m.dual = dual;
  if (!m.converged) m.converged = primal - dual <= opts.gap_tolerance * std::abs(primal);
  m.w = w.head(d);
  m.b = w[d];
  return m;
}

double svm_score(const SvmModel& model, const Eigen::VectorXd& x) {
  require_dim(x.size(), model.w.size(), "svm");
  return model.w.dot(x) + model.b;
}

Eigen::VectorXd svm_scores(const SvmModel& model, const FeatureMatrix& x) {
  require_dim(x.cols(), model.w.size(), "svm");
  return (x * model.w).array() + model.b;
}

LdaModel lda_fit(const FeatureMatrix& x, const LabelVector& y) {
  require_binary(x, y);
  const Eigen::Index d = x.cols();
  const Eigen::Index n = x.rows();
  LdaModel m;
  m.mean_pos = Eigen::VectorXd::Zero(d);
  m.mean_neg = Eigen::VectorXd::Zero(d);
  Eigen::Index n_pos = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (y[i] > 0.0) {
      m.mean_pos += x.row(i).transpose();
      ++n_pos;
    } else {
      m.mean_neg += x.row(i).transpose();
    }
  }
  m.mean_pos /= static_cast<double>(n_pos);
  m.mean_neg /= static_cast<double>(n - n_pos);
  Eigen::MatrixXd centred(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    centred.row(i) = x.row(i) - (y[i] > 0.0 ? m.mean_pos : m.mean_neg).transpose();
  }
  const double denom = n > 2 ? static_cast<double>(n - 2) : static_cast<double>(n);
  Eigen::MatrixXd s = (centred.transpose() * centred) / denom;
  const double trace = s.trace();
  m.lambda = trace > 0.0 ? 1e-3 * trace / static_cast<double>(d) : 1e-3;
  s.diagonal().array() += m.lambda;
  m.projection = s.ldlt().solve(m.mean_pos - m.mean_neg);
  return m;
}

Eigen::VectorXd lda_scores(const LdaModel& model, const FeatureMatrix& x) {
  require_dim(x.cols(), model.projection.size(), "lda");
  return x * model.projection;
}

nlohmann::json PipelineConfig::to_json() const {
  nlohmann::json j;
  j["classifier"] = classifier == ClassifierKind::kSvm ? "svm" : "lda";
  j["C"] = c;
  j["n_components"] = n_components ? nlohmann::json(*n_components) : nlohmann::json(nullptr);
  j["class_weighting"] = class_weighting;
  j["seed"] = seed;
  return j;
}

PipelineConfig PipelineConfig::from_json(const nlohmann::json& j) {
  PipelineConfig c;
  c.classifier = j.at("classifier").get<std::string>() == "lda" ? ClassifierKind::kLda
                                                                  : ClassifierKind::kSvm;
  c.c = j.at("C").get<double>();
  if (!j.at("n_components").is_null()) c.n_components = j.at("n_components").get<Eigen::Index>();
  c.class_weighting = j.at("class_weighting").get<bool>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

Eigen::VectorXd Pipeline::score(const FeatureMatrix& x) const {
  FeatureMatrix z = scaler_apply(scaler, x);
  if (pca) z = pca_transform(*pca, z);
  if (const auto* svm = std::get_if<SvmModel>(&classifier)) return svm_scores(*svm, z);
  return lda_scores(std::get<LdaModel>(classifier), z);
}

void Pipeline::refit(const FeatureMatrix& x, const LabelVector& y) {
  if (frozen) {
    throw Error(ErrorCode::kFrozenPipeline, "pipeline " + fingerprint + " is frozen after fit");
  }
  *this = fit_pipeline(x, y, config, kind);
}

namespace {

std::string pipeline_fingerprint(const PipelineConfig& config, FeatureKind kind,
                                 Eigen::Index n, Eigen::Index d) {
  nlohmann::json j = config.to_json();
  j["kind"] = to_string(kind);
  j["n"] = n;
  j["d"] = d;
  return hex64(fnv1a(j.dump()));
}

Pipeline assemble(FeatureKind kind, const PipelineConfig& config, ScalerModel scaler,
                  std::optional<PcaModel> pca, std::variant<SvmModel, LdaModel> classifier,
                  Eigen::Index n) {
  Pipeline p;
  p.kind = kind;
  p.config = config;
  p.scaler = std::move(scaler);
  p.pca = std::move(pca);
  p.classifier = std::move(classifier);
  p.fingerprint = pipeline_fingerprint(config, kind, n, p.scaler.dim());
  p.frozen = true;
  return p;
}

}  // namespace

Pipeline fit_pipeline(const FeatureMatrix& x, const LabelVector& y, const PipelineConfig& config,
                      FeatureKind kind) {
  require_binary(x, y);
  ScalerModel scaler = scaler_fit(x);
  FeatureMatrix z = scaler_apply(scaler, x);
  std::optional<PcaModel> pca;
  if (config.n_components) {
    pca = pca_fit(z, *config.n_components);
    z = pca_transform(*pca, z);
  }
  std::variant<SvmModel, LdaModel> classifier;
  if (config.classifier == ClassifierKind::kSvm) {
    SvmOptions opts;
    opts.c = config.c;
    opts.class_weighting = config.class_weighting;
    opts.seed = config.seed;
    classifier = svm_train(z, y, opts);
  } else {
    classifier = lda_fit(z, y);
  }
  return assemble(kind, config, std::move(scaler), std::move(pca), std::move(classifier),
                  x.rows());
}

nlohmann::json pipeline_to_json(const Pipeline& p) {
  nlohmann::json j;
  j["format"] = "vpdiag-pipeline";
  j["version"] = kPipelineVersion;
  j["kind"] = to_string(p.kind);
  j["config"] = p.config.to_json();
  j["fingerprint"] = p.fingerprint;
  j["frozen"] = p.frozen;
  std::vector<bool> constant(p.scaler.constant.begin(), p.scaler.constant.end());
  j["scaler"] = {{"mean", vec_json(p.scaler.mean)},
                 {"stddev", vec_json(p.scaler.stddev)},
                 {"constant", constant}};
  if (p.pca) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index r = 0; r < p.pca->k(); ++r) {
      rows.push_back(vec_json(p.pca->components.row(r).transpose()));
    }
    j["pca"] = {{"components", rows},
                {"explained_variance", vec_json(p.pca->explained_variance)},
                {"explained_variance_ratio", vec_json(p.pca->explained_variance_ratio)},
                {"mean", vec_json(p.pca->mean)},
                {"warning", p.pca->warning}};
  } else {
    j["pca"] = nullptr;
  }
  if (const auto* svm = std::get_if<SvmModel>(&p.classifier)) {
    j["classifier"] = {{"type", "svm"},          {"w", vec_json(svm->w)},
                       {"b", svm->b},            {"C", svm->c},
                       {"class_weighting", svm->class_weighting},
                       {"epochs", svm->epochs},  {"primal", svm->primal},
                       {"dual", svm->dual},      {"converged", svm->converged}};
  } else {
    const auto& lda = std::get<LdaModel>(p.classifier);
    j["classifier"] = {{"type", "lda"},
                       {"projection", vec_json(lda.projection)},
                       {"mean_pos", vec_json(lda.mean_pos)},
                       {"mean_neg", vec_json(lda.mean_neg)},
                       {"lambda", lda.lambda}};
  }
  return j;
}

Pipeline pipeline_from_json(const nlohmann::json& j) {
  if (!j.is_object() || j.value("format", "") != "vpdiag-pipeline") {
    throw Error(ErrorCode::kCorruptFile, "not a pipeline file");
  }
  if (!j.contains("version") || !j["version"].is_number_integer() ||
      j["version"].get<int>() != kPipelineVersion) {
    throw Error(ErrorCode::kVersionMismatch,
                "pipeline file version " + (j.contains("version") ? j["version"].dump() : "missing") +
                    ", this build reads version " + std::to_string(kPipelineVersion));
  }
  try {
    Pipeline p;
    p.kind = parse_feature_kind(j.at("kind").get<std::string>());
    p.config = PipelineConfig::from_json(j.at("config"));
    p.fingerprint = j.at("fingerprint").get<std::string>();
    p.frozen = j.at("frozen").get<bool>();
    const auto& s = j.at("scaler");
    p.scaler.mean = json_vec(s.at("mean"));
    p.scaler.stddev = json_vec(s.at("stddev"));
    const auto constant = s.at("constant").get<std::vector<bool>>();
    p.scaler.constant.resize(static_cast<Eigen::Index>(constant.size()));
    for (std::size_t i = 0; i < constant.size(); ++i) {
      p.scaler.constant[static_cast<Eigen::Index>(i)] = constant[i];
    }
    Eigen::Index dim = p.scaler.dim();
    if (p.scaler.stddev.size() != dim || p.scaler.constant.size() != dim) {
      throw Error(ErrorCode::kCorruptFile, "scaler stage dimensions disagree");
    }
    if (!j.at("pca").is_null()) {
      const auto& q = j.at("pca");
      PcaModel pca;
      const auto& rows = q.at("components");
      pca.mean = json_vec(q.at("mean"));
      pca.components.resize(static_cast<Eigen::Index>(rows.size()), pca.mean.size());
      for (std::size_t r = 0; r < rows.size(); ++r) {
        const Eigen::VectorXd row = json_vec(rows[r]);
        if (row.size() != pca.mean.size()) {
          throw Error(ErrorCode::kCorruptFile, "pca component length disagrees with mean");
        }
        pca.components.row(static_cast<Eigen::Index>(r)) = row.transpose();
      }
      pca.explained_variance = json_vec(q.at("explained_variance"));
      pca.explained_variance_ratio = json_vec(q.at("explained_variance_ratio"));
      pca.warning = q.value("warning", "");
      if (pca.mean.size() != dim) throw Error(ErrorCode::kCorruptFile, "pca input dimension");
      dim = pca.k();
      p.pca = std::move(pca);
    }
    const auto& c = j.at("classifier");
    if (c.at("type") == "svm") {
      SvmModel svm;
      svm.w = json_vec(c.at("w"));
      svm.b = c.at("b").get<double>();
      svm.c = c.at("C").get<double>();
      svm.class_weighting = c.at("class_weighting").get<bool>();
      svm.epochs = c.at("epochs").get<int>();
      svm.primal = c.at("primal").get<double>();
      svm.dual = c.at("dual").get<double>();
      svm.converged = c.at("converged").get<bool>();
      if (svm.w.size() != dim) throw Error(ErrorCode::kCorruptFile, "svm input dimension");
      p.classifier = std::move(svm);
    } else if (c.at("type") == "lda") {
      LdaModel lda;
      lda.projection = json_vec(c.at("projection"));
      lda.mean_pos = json_vec(c.at("mean_pos"));
      lda.mean_neg = json_vec(c.at("mean_neg"));
      lda.lambda = c.at("lambda").get<double>();
      if (lda.projection.size() != dim) throw Error(ErrorCode::kCorruptFile, "lda input dimension");
      p.classifier = std::move(lda);
    } else {
      throw Error(ErrorCode::kCorruptFile, "unknown classifier type");
    }
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kCorruptFile, std::string("malformed pipeline file: ") + e.what());
  }
}

void pipeline_save(const Pipeline& p, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kUnwritablePath, "cannot write " + path.string());
  out << pipeline_to_json(p).dump(1) << '\n';
  if (!out) throw Error(ErrorCode::kUnwritablePath, "write failed: " + path.string());
}

Pipeline pipeline_load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kMissingFile, "cannot open " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kCorruptFile, "unreadable pipeline file " + path.string() + ": " + e.what());
  }
  return pipeline_from_json(j);
}

void check_disjoint(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  const std::set<std::string> left(a.begin(), a.end());
  std::set<std::string> shared;
  for (const auto& id : b) {
    if (left.count(id) != 0) shared.insert(id);
  }
  if (!shared.empty()) {
    std::string list;
    for (const auto& id : shared) list += (list.empty() ? "" : ", ") + id;
    throw Error(ErrorCode::kSplitOverlap, "utterance ids in both splits: " + list);
  }
}

std::string GridSearchResult::to_csv() const {
  std::ostringstream out;
  out << "C,requested_pcs,effective_pcs,validation_auc\n";
  char buf[64];
  for (const GridEntry& e : entries) {
    std::snprintf(buf, sizeof buf, "%.17g", e.c);
    out << buf << ',' << (e.requested_pcs ? std::to_string(*e.requested_pcs) : "none") << ','
        << (e.effective_pcs ? std::to_string(*e.effective_pcs) : "none") << ',';
    std::snprintf(buf, sizeof buf, "%.17g", e.validation_auc);
    out << buf << '\n';
  }
  return out.str();
}

GridSearchResult grid_search(const LabelledSet& train, const LabelledSet& valid,
                             const GridSpec& grid, FeatureKind kind) {
  check_disjoint(train.ids, valid.ids);
  require_binary(train.x, train.y);
  require_dim(valid.x.cols(), train.x.cols(), "validation set");
  if (grid.c_grid.empty() || grid.pcs_grid.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "empty hyper-parameter grid");
  }

  GridSearchResult result;
  std::vector<double> cs = grid.c_grid;
  std::sort(cs.begin(), cs.end());
  std::vector<std::optional<Eigen::Index>> pcs = grid.pcs_grid;
  std::sort(pcs.begin(), pcs.end(), [](const auto& a, const auto& b) {
    if (!a) return false;
    if (!b) return true;
    return *a < *b;
  });

  const ScalerModel scaler = scaler_fit(train.x);
  const FeatureMatrix zt = scaler_apply(scaler, train.x);
  const FeatureMatrix zv = scaler_apply(scaler, valid.x);

  std::optional<PcaModel> full;
  Eigen::Index max_pcs = 0;
  for (const auto& k : pcs) {
    if (k) max_pcs = std::max(max_pcs, *k);
  }
  if (max_pcs > 0) {
    full = pca_fit(zt, max_pcs);
    if (!full->warning.empty()) result.warnings.push_back(full->warning);
  }

  // Distinct effective settings in tie-break order.
  struct Setting {
    std::optional<Eigen::Index> requested, effective;
  };
  std::vector<Setting> settings;
  for (const auto& k : pcs) {
    std::optional<Eigen::Index> eff;
    if (k) eff = std::min(*k, full->k());
    const bool seen = std::any_of(settings.begin(), settings.end(),
                                  [&](const Setting& s) { return s.effective == eff; });
    if (!seen) settings.push_back({k, eff});
  }

  double best_auc = -1.0;
  std::optional<Pipeline> best;
  for (double c : cs) {
    for (const Setting& s : settings) {
      std::optional<PcaModel> pca;
      FeatureMatrix xt = zt, xv = zv;
      if (s.effective) {
        pca = pca_truncate(*full, *s.effective);
        xt = pca_transform(*pca, zt);
        xv = pca_transform(*pca, zv);
      }
      SvmOptions opts;
      opts.c = c;
      opts.class_weighting = grid.class_weighting;
      opts.seed = grid.seed;
      SvmModel svm = svm_train(xt, train.y, opts);
      GridEntry entry{c, s.requested, s.effective, auc_roc(svm_scores(svm, xv), valid.y)};
      result.entries.push_back(entry);
      if (entry.validation_auc > best_auc + 1e-12) {
        best_auc = entry.validation_auc;
        result.best_entry = entry;
        PipelineConfig config;
        config.c = c;
        config.n_components = s.effective;
        config.class_weighting = grid.class_weighting;
        config.seed = grid.seed;
        best = assemble(kind, config, scaler, pca, std::move(svm), train.x.rows());
      }
    }
  }
  result.best = std::move(*best);
  return result;
}

}  // namespace vpdiag
