#include <doctest.h>

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "test_support.hpp"
#include "vpdiag/error.hpp"
#include "vpdiag/evaluation.hpp"
#include "vpdiag/models.hpp"

using namespace vpdiag;
using namespace vpdiag::testing;

namespace {

Eigen::MatrixXd gaussian(Eigen::Index n, Eigen::Index d, Rng& rng) {
  Eigen::MatrixXd x(n, d);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
  return x;
}

// Two Gaussian classes shifted by `shift` along every axis.
LabelledSet two_class(Eigen::Index n, Eigen::Index d, double shift, std::uint64_t seed,
                      const std::string& prefix) {
  Rng rng(seed);
  LabelledSet s;
  s.x = gaussian(n, d, rng);
  s.y.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    s.y[i] = i % 2 == 0 ? 1.0 : -1.0;
    s.x.row(i).array() += 0.5 * shift * s.y[i];
    s.ids.push_back(prefix + std::to_string(i));
  }
  return s;
}

// Dual QP max sum(a) - 0.5 a'Qa, 0 <= a <= U, by accelerated projected
// gradient run far past convergence. Returns the primal value of w(a).
double qp_oracle_primal(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                        const Eigen::VectorXd& upper) {
  const Eigen::Index n = x.rows();
  Eigen::MatrixXd xt(n, x.cols() + 1);
  xt << x, Eigen::VectorXd::Ones(n);
  const Eigen::MatrixXd z = y.asDiagonal() * xt;
  const Eigen::MatrixXd q = z * z.transpose();
  const double lipschitz = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(q).eigenvalues().maxCoeff();
  Eigen::VectorXd a = Eigen::VectorXd::Zero(n), prev = a, v = a;
  double t = 1.0;
  for (int it = 0; it < 200000; ++it) {
    const Eigen::VectorXd grad = Eigen::VectorXd::Ones(n) - q * v;
    prev = a;
    a = (v + grad / lipschitz).cwiseMax(0.0).cwiseMin(upper);
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    v = a + ((t - 1.0) / t_next) * (a - prev);
    t = t_next;
  }
  const Eigen::VectorXd w = z.transpose() * a;
  double loss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) loss += upper[i] * std::max(0.0, 1.0 - y[i] * xt.row(i).dot(w));
  return 0.5 * w.squaredNorm() + loss;
}

}  // namespace

TEST_CASE("scaler on a hand-computed column") {
  Eigen::MatrixXd x(3, 2);
  x << 1, 7, 2, 7, 3, 7;
  const ScalerModel m = scaler_fit(x);
  CHECK(m.mean[0] == 2.0);
  CHECK(m.stddev[0] == doctest::Approx(std::sqrt(2.0 / 3.0)));
  CHECK_FALSE(m.constant[0]);
  CHECK(m.constant[1]);
  const Eigen::MatrixXd z = scaler_apply(m, x);
  CHECK(z(0, 0) == doctest::Approx(-1.2247).epsilon(1e-4));
  CHECK(z(1, 0) == 0.0);
  CHECK(z(2, 0) == doctest::Approx(1.2247).epsilon(1e-4));
  CHECK(z.col(1) == x.col(1));

  Eigen::MatrixXd held(1, 2);
  held << 10, 7;
  CHECK(scaler_apply(m, held)(0, 0) == doctest::Approx(8.0 / std::sqrt(2.0 / 3.0)));
  CHECK_THROWS_AS(scaler_fit(Eigen::MatrixXd(0, 2)), Error);
}

TEST_CASE("scaled training columns have zero mean and unit std") {
  Rng rng(3);
  Eigen::MatrixXd x = gaussian(57, 9, rng);
  x.col(3) = x.col(3) * 1e4 + Eigen::VectorXd::Constant(57, 3e5);
  const Eigen::MatrixXd z = scaler_apply(scaler_fit(x), x);
  for (Eigen::Index j = 0; j < z.cols(); ++j) {
    const double mean = z.col(j).mean();
    const double sd = std::sqrt((z.col(j).array() - mean).square().mean());
    CHECK(std::abs(mean) <= 1e-9);
    CHECK(std::abs(sd - 1.0) <= 1e-9);
  }
}

TEST_CASE("Jacobi eigendecomposition agrees with a library solver") {
  Rng rng(11);
  for (int d : {1, 2, 7, 40}) {
    const Eigen::MatrixXd a = gaussian(d + 5, d, rng);
    const Eigen::MatrixXd s = a.transpose() * a;
    const SymmetricEigen mine = jacobi_eigen(s);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ref(s);
    const Eigen::VectorXd ref_values = ref.eigenvalues().reverse();
    CHECK((mine.values - ref_values).cwiseAbs().maxCoeff() <= 1e-9 * ref_values[0]);
    CHECK((mine.vectors.transpose() * mine.vectors - Eigen::MatrixXd::Identity(d, d))
              .cwiseAbs()
              .maxCoeff() <= 1e-10);
    CHECK((s * mine.vectors - mine.vectors * mine.values.asDiagonal()).cwiseAbs().maxCoeff() <=
          1e-9 * ref_values[0]);
  }
}

TEST_CASE("PCA of points on y = x") {
  Eigen::MatrixXd x(5, 2);
  x << -2, -2, -1, -1, 0, 0, 1, 1, 2, 2;
  const PcaModel m = pca_fit(x, 1);
  REQUIRE(m.k() == 1);
  CHECK(std::abs(m.components(0, 0)) == doctest::Approx(1.0 / std::sqrt(2.0)));
  CHECK(m.components(0, 0) == doctest::Approx(m.components(0, 1)));
  CHECK(m.explained_variance_ratio[0] == doctest::Approx(1.0));

  const PcaModel capped = pca_fit(x, 2);
  CHECK(capped.k() == 1);
  CHECK_FALSE(capped.warning.empty());
}

TEST_CASE("full-rank PCA reconstructs the data") {
  Rng rng(5);
  const Eigen::MatrixXd x = gaussian(30, 6, rng);
  const PcaModel m = pca_fit(x, 6);
  CHECK(m.k() == 6);
  CHECK((pca_inverse(m, pca_transform(m, x)) - x).cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("PCA subspace matches the eigendecomposition oracle") {
  Rng rng(21);
  Eigen::MatrixXd x = gaussian(80, 12, rng);
  x *= Eigen::VectorXd::LinSpaced(12, 3.0, 0.2).asDiagonal();
  const int k = 4;
  const PcaModel m = pca_fit(x, k);

  const Eigen::MatrixXd centred = x.rowwise() - x.colwise().mean();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ref(centred.transpose() * centred / 79.0);
  const Eigen::MatrixXd basis = ref.eigenvectors().rightCols(k);
  // Cosines of the principal angles are the singular values of U'V.
  const Eigen::VectorXd cosines =
      Eigen::JacobiSVD<Eigen::MatrixXd>(basis.transpose() * m.components.transpose()).singularValues();
  for (int i = 0; i < k; ++i) {
    CHECK(std::acos(std::min(1.0, cosines[i])) < 1e-6);
  }
  CHECK((m.components * m.components.transpose() - Eigen::MatrixXd::Identity(k, k))
            .cwiseAbs()
            .maxCoeff() <= 1e-8);
  for (int i = 1; i < k; ++i) CHECK(m.explained_variance[i] <= m.explained_variance[i - 1]);
}

TEST_CASE("two-point SVM puts the boundary at zero") {
  Eigen::MatrixXd x(2, 1);
  x << 1, -1;
  const Eigen::Vector2d y(1, -1);
  SvmOptions opts;
  opts.c = 1.0;
  const SvmModel m = svm_train(x, y, opts);
  CHECK(svm_score(m, Eigen::VectorXd::Constant(1, 1.0)) > 0.0);
  CHECK(svm_score(m, Eigen::VectorXd::Constant(1, -1.0)) < 0.0);
  CHECK(std::abs(m.b) <= 1e-6);
  CHECK(m.converged);
}

TEST_CASE("tiny C shrinks the weights") {
  const LabelledSet s = two_class(40, 5, 2.0, 1, "u");
  SvmOptions opts;
  opts.c = 1e-9;
  CHECK(svm_train(s.x, s.y, opts).w.norm() <= 1e-3);
}

TEST_CASE("SVM objective matches a projected-gradient QP oracle") {
  for (std::uint64_t seed = 1; seed <= 8; ++seed) {
    Rng rng(seed);
    const auto n = static_cast<Eigen::Index>(6 + rng.below(15));
    LabelledSet s = two_class(n, 3, rng.uniform(0.0, 2.0), seed * 7, "u");
    if (seed % 3 == 0) s.y[0] = -s.y[0];
    for (double c : {0.01, 1.0}) {
      for (bool weighting : {true, false}) {
        SvmOptions opts;
        opts.c = c;
        opts.class_weighting = weighting;
        opts.seed = seed;
        const SvmModel m = svm_train(s.x, s.y, opts);
        const double oracle =
            qp_oracle_primal(s.x, s.y, svm_sample_bounds(s.y, c, weighting));
        INFO("seed " << seed << " C " << c);
        CHECK(m.converged);
        CHECK(m.primal - m.dual <= 1e-4 * m.primal);
        CHECK(std::abs(svm_primal(m, s.x, s.y) - oracle) <= 1e-4 * oracle);
      }
    }
  }
}

TEST_CASE("SVM scoring, label flip and determinism") {
  SvmModel m;
  m.w = Eigen::Vector2d(1, 0);
  m.b = 0.0;
  CHECK(svm_score(m, Eigen::Vector2d(2, 5)) == 2.0);
  CHECK(svm_score(m, Eigen::Vector2d(-2, -5)) == -2.0);
  CHECK_THROWS_AS(svm_score(m, Eigen::Vector3d(1, 2, 3)), Error);

  const LabelledSet s = two_class(50, 4, 1.0, 9, "u");
  SvmOptions opts;
  opts.seed = 4;
  const SvmModel a = svm_train(s.x, s.y, opts);
  const SvmModel again = svm_train(s.x, s.y, opts);
  CHECK(a.w == again.w);
  CHECK(a.b == again.b);
  const SvmModel flipped = svm_train(s.x, -s.y, opts);
  CHECK((svm_scores(flipped, s.x) + svm_scores(a, s.x)).cwiseAbs().maxCoeff() <= 1e-12);
  const double auc = auc_roc(svm_scores(a, s.x), s.y);
  CHECK(auc_roc(svm_scores(flipped, s.x), s.y) == doctest::Approx(1.0 - auc));

  SvmModel scaled = a;
  scaled.w *= 3.5;
  scaled.b *= 3.5;
  CHECK(auc_roc(svm_scores(scaled, s.x), s.y) == auc);

  CHECK_THROWS_AS(svm_train(s.x, Eigen::VectorXd::Ones(50), opts), Error);
}

TEST_CASE("LDA direction on axis-separated clusters") {
  Rng rng(8);
  Eigen::MatrixXd x = gaussian(2000, 5, rng);
  Eigen::VectorXd y(2000);
  for (int i = 0; i < 2000; ++i) {
    y[i] = i < 1000 ? 1.0 : -1.0;
    x(i, 0) += 3.0 * y[i];
  }
  const LdaModel m = lda_fit(x, y);
  const Eigen::VectorXd p = m.projection.cwiseAbs() / m.projection.cwiseAbs().maxCoeff();
  CHECK(p[0] == 1.0);
  CHECK(p.tail(4).maxCoeff() <= 0.1);

  // Closed form with an explicit inverse.
  Eigen::MatrixXd centred = x;
  for (int i = 0; i < 2000; ++i) centred.row(i) -= (y[i] > 0 ? m.mean_pos : m.mean_neg).transpose();
  Eigen::MatrixXd s = centred.transpose() * centred / 1998.0;
  const double lambda = 1e-3 * s.trace() / 5.0;
  CHECK(m.lambda == doctest::Approx(lambda).epsilon(1e-12));
  s.diagonal().array() += lambda;
  const Eigen::VectorXd oracle = s.inverse() * (m.mean_pos - m.mean_neg);
  CHECK((m.projection - oracle).cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("LDA with identical class means is near chance") {
  Rng rng(12);
  Eigen::MatrixXd half = gaussian(100, 3, rng);
  Eigen::MatrixXd x(200, 3);
  x << half, half;
  Eigen::VectorXd y(200);
  y << Eigen::VectorXd::Ones(100), -Eigen::VectorXd::Ones(100);
  const LdaModel m = lda_fit(x, y);
  CHECK(m.projection.norm() <= 1e-12);
  CHECK(auc_roc(lda_scores(m, x), y) == doctest::Approx(0.5));

  // Singular covariance never aborts.
  Eigen::MatrixXd degenerate = Eigen::MatrixXd::Zero(4, 3);
  degenerate(0, 0) = 1.0;
  CHECK(lda_fit(degenerate, Eigen::Vector4d(1, 1, -1, -1)).projection.allFinite());
}

TEST_CASE("pipeline persistence") {
  const auto dir = scratch_dir("pipeline");
  const LabelledSet s = two_class(60, 8, 1.0, 2, "u");
  PipelineConfig cfg;
  cfg.c = 0.1;
  cfg.n_components = 3;
  const Pipeline p = fit_pipeline(s.x, s.y, cfg, FeatureKind::kLldCompact);
  CHECK(p.frozen);
  pipeline_save(p, dir / "p.json");
  Pipeline back = pipeline_load(dir / "p.json");
  CHECK(back.score(s.x) == p.score(s.x));
  CHECK(back.kind == FeatureKind::kLldCompact);
  CHECK(back.fingerprint == p.fingerprint);
  try {
    back.refit(s.x, s.y);
    FAIL("frozen pipeline refitted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kFrozenPipeline);
  }

  cfg.classifier = ClassifierKind::kLda;
  cfg.n_components.reset();
  const Pipeline lda = fit_pipeline(s.x, s.y, cfg);
  pipeline_save(lda, dir / "lda.json");
  CHECK(pipeline_load(dir / "lda.json").score(s.x) == lda.score(s.x));

  nlohmann::json j = pipeline_to_json(p);
  j["version"] = kPipelineVersion + 1;
  std::ofstream(dir / "v.json") << j.dump();
  try {
    pipeline_load(dir / "v.json");
    FAIL("version mismatch accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kVersionMismatch);
  }

  std::ofstream(dir / "bad.json") << "{\"format\": \"vpdiag-pipel";
  try {
    pipeline_load(dir / "bad.json");
    FAIL("corrupt file accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kCorruptFile);
  }
  j = pipeline_to_json(p);
  j["classifier"]["w"] = std::vector<double>{1.0};
  std::ofstream(dir / "dims.json") << j.dump();
  CHECK_THROWS_AS(pipeline_load(dir / "dims.json"), Error);
}

TEST_CASE("grid search selection rules") {
  const LabelledSet train = two_class(80, 6, 1.0, 3, "t");
  const LabelledSet valid = two_class(40, 6, 1.0, 4, "v");

  GridSpec single;
  single.c_grid = {0.01};
  single.pcs_grid = {std::nullopt};
  const GridSearchResult one = grid_search(train, valid, single);
  CHECK(one.entries.size() == 1);
  CHECK(one.best.config.c == 0.01);
  CHECK_FALSE(one.best.config.n_components.has_value());

  // Every configuration separates these perfectly: ties resolve to the
  // smallest C, then the fewest components.
  const LabelledSet easy_train = two_class(60, 4, 12.0, 5, "a");
  const LabelledSet easy_valid = two_class(30, 4, 12.0, 6, "b");
  GridSpec tied;
  tied.c_grid = {1.0, 1e-3, 0.1};
  tied.pcs_grid = {std::nullopt, 3, 2};
  const GridSearchResult t = grid_search(easy_train, easy_valid, tied);
  CHECK(t.best_entry.validation_auc == 1.0);
  CHECK(t.best.config.c == 1e-3);
  CHECK(t.best.config.n_components == 2);

  // Default grid on 6-d data: every PC count caps at 6 and is tried once.
  const GridSearchResult capped = grid_search(train, valid);
  CHECK(capped.entries.size() == 6 * 2);
  CHECK_FALSE(capped.warnings.empty());
  for (const GridEntry& e : capped.entries) {
    if (e.effective_pcs) CHECK(*e.effective_pcs == 6);
  }
  CHECK(capped.to_csv().find("validation_auc") != std::string::npos);
}

TEST_CASE("grid search picks the only configuration that reaches AUC 1") {
  // Class signal lives in one axis; four strongly correlated noise axes make
  // up the first principal component even after scaling.
  Rng rng(30);
  auto make = [&](Eigen::Index n, const std::string& prefix) {
    LabelledSet s;
    s.x = gaussian(n, 5, rng);
    s.y.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      s.y[i] = i % 2 == 0 ? 1.0 : -1.0;
      const double common = rng.normal();
      for (int j = 0; j < 4; ++j) s.x(i, j) = 50.0 * (common + 0.1 * s.x(i, j));
      s.x(i, 4) = 0.1 * s.x(i, 4) + 0.5 * s.y[i];
      s.ids.push_back(prefix + std::to_string(i));
    }
    return s;
  };
  const LabelledSet train = make(200, "t");
  const LabelledSet valid = make(100, "v");
  GridSpec grid;
  grid.c_grid = {1.0};
  grid.pcs_grid = {1, std::nullopt};
  const GridSearchResult r = grid_search(train, valid, grid);
  REQUIRE(r.entries.size() == 2);
  CHECK(r.entries[0].validation_auc < 0.9);
  CHECK(r.entries[1].validation_auc == 1.0);
  CHECK_FALSE(r.best.config.n_components.has_value());
}

TEST_CASE("grid search rejects overlapping splits") {
  LabelledSet train = two_class(20, 3, 1.0, 1, "u");
  LabelledSet valid = two_class(10, 3, 1.0, 2, "u");
  try {
    grid_search(train, valid);
    FAIL("overlap accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kSplitOverlap);
    CHECK(std::string(e.what()).find("u3") != std::string::npos);
  }
}
