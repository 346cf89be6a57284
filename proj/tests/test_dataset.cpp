#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <random>

#include "mixest/dataset.hpp"
#include "mixest/simulation.hpp"

using namespace mixest;

namespace {

std::string temp_csv(const std::string& contents) {
  static int counter = 0;
  std::string path = "test_dataset_tmp_" + std::to_string(counter++) + ".csv";
  std::ofstream file(path);
  file << contents;
  return path;
}

}  // namespace

TEST_CASE("load_csv parses a 4-row file") {
  auto path = temp_csv("Y,Z,X1\n1.5,1,0.2\n2.5,1,-0.3\n0.5,0,1.1\n1.0,0,0.0\n");
  ObservedSample sample = load_csv(path, "Y", "Z");
  CHECK(sample.size() == 4);
  CHECK(sample.treated_count() == 2);
  CHECK(sample.control_count() == 2);
  CHECK(sample.dim() == 1);
  CHECK(sample.column_names()[0] == "X1");
  CHECK(sample.outcomes()[0] == doctest::Approx(1.5));
  std::remove(path.c_str());
}

TEST_CASE("load_csv rejects non-binary treatment") {
  auto path = temp_csv("Y,Z,X1\n1,1,0\n2,2,1\n");
  CHECK_THROWS_WITH_AS(load_csv(path, "Y", "Z"),
                       doctest::Contains("non-binary treatment"), ValidationError);
  std::remove(path.c_str());
}

TEST_CASE("load_csv rejects missing values with a row/column report") {
  auto path = temp_csv("Y,Z,X1\n1,1,0.5\n2,0,\n");
  CHECK_THROWS_WITH_AS(load_csv(path, "Y", "Z"),
                       doctest::Contains("row 3, column 'X1'"), ValidationError);
  std::remove(path.c_str());
}

TEST_CASE("load_csv rejects single-class treatment") {
  auto path = temp_csv("Y,Z,X1\n1,1,0\n2,1,1\n");
  CHECK_THROWS_AS(load_csv(path, "Y", "Z"), ValidationError);
  auto path2 = temp_csv("Y,Z,X1\n1,0,0\n2,0,1\n");
  CHECK_THROWS_WITH_AS(load_csv(path2, "Y", "Z"), doctest::Contains("no treated"),
                       ValidationError);
  std::remove(path.c_str());
  std::remove(path2.c_str());
}

TEST_CASE("load_csv supports alternative delimiters") {
  auto path = temp_csv("Y;Z;X1\n1;1;0\n2;0;1\n");
  ObservedSample sample = load_csv(path, "Y", "Z", ';');
  CHECK(sample.size() == 2);
  std::remove(path.c_str());
}

TEST_CASE("write_csv then load_csv is the identity") {
  ScenarioSpec spec = ScenarioSpec::defaults(Overlap::strong);
  spec.n = 60;
  spec.seed = 11;
  ObservedSample sample = generate(spec, 0);

  auto path = temp_csv("");
  write_csv(sample, path);
  ObservedSample back = load_csv(path, "Y", "Z");
  REQUIRE(back.size() == sample.size());
  CHECK((back.outcomes() - sample.outcomes()).norm() == 0.0);
  CHECK((back.treatments() - sample.treatments()).norm() == 0.0);
  CHECK((back.covariates() - sample.covariates()).norm() == 0.0);
  CHECK(back.column_names() == sample.column_names());
  std::remove(path.c_str());
}

TEST_CASE("summarize counts and group means") {
  Eigen::VectorXd y(4), z(4);
  Eigen::MatrixXd x(4, 1);
  y << 1, 2, 3, 4;
  z << 1, 1, 0, 0;
  x << 5, 7, 1, 3;
  ObservedSample sample(y, z, x, {"x"});

  OverlapSummary s = summarize(sample);
  CHECK(s.pi_hat == doctest::Approx(0.5));
  CHECK(s.pi_hat * s.n == doctest::Approx(s.n_treated));
  CHECK(s.treated_covariate_means[0] == doctest::Approx(6.0));
  CHECK(s.control_covariate_means[0] == doctest::Approx(2.0));
  CHECK_FALSE(s.rank_deficient);

  Eigen::VectorXd probs(4);
  probs << 0.7, 0.8, 0.2, 0.4;
  OverlapSummary sp = summarize(sample, probs);
  CHECK(sp.has_propensity);
  CHECK(sp.treated_min_e == doctest::Approx(0.7));
  CHECK(sp.control_max_e == doctest::Approx(0.4));
}

TEST_CASE("summarize pi_hat times N is exactly the treated count") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 400);
    Eigen::VectorXd y = Eigen::VectorXd::Random(n);
    Eigen::MatrixXd x = Eigen::MatrixXd::Random(n, 2);
    Eigen::VectorXd z(n);
    int treated = 0;
    for (int i = 0; i < n; ++i) {
      z[i] = (rng() % 2 == 0) ? 1.0 : 0.0;
      treated += z[i] == 1.0;
    }
    if (treated == 0 || treated == n) continue;
    ObservedSample sample(y, z, x, {"a", "b"});
    OverlapSummary s = summarize(sample);
    CHECK(s.pi_hat * s.n == doctest::Approx(treated).epsilon(1e-15));
  }
}

TEST_CASE("pi_hat of a strong-overlap draw tracks the DGP marginal probability") {
  ScenarioSpec spec = ScenarioSpec::defaults(Overlap::strong);
  spec.n = 20000;
  spec.seed = 5;
  GeneratedData data = generate_full(spec, 0);

  // Independent oracle: Monte Carlo average of e(X) under the DGP.
  std::mt19937_64 rng(99);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const Eigen::VectorXd beta = overlap_beta(Overlap::strong);
  double acc = 0.0;
  const int draws = 200000;
  for (int i = 0; i < draws; ++i) {
    double eta = beta[0];
    for (int j = 0; j < 5; ++j) eta += beta[j + 1] * gauss(rng);
    acc += 1.0 / (1.0 + std::exp(-eta));
  }
  const double marginal = acc / draws;
  CHECK(data.sample.pi_hat() == doctest::Approx(marginal).epsilon(0.03));
}

TEST_CASE("rank deficiency is detected lazily") {
  Eigen::VectorXd y(4), z(4);
  Eigen::MatrixXd x(4, 2);
  y << 1, 2, 3, 4;
  z << 1, 0, 1, 0;
  x << 1, 2, 2, 4, 3, 6, 4, 8;  // second column is twice the first
  ObservedSample sample(y, z, x, {"a", "b"});
  CHECK(sample.rank_deficient());
}

TEST_CASE("constructor rejects inconsistent and non-finite inputs") {
  Eigen::VectorXd y(2), z(2);
  Eigen::MatrixXd x(2, 1);
  y << 1, 2;
  z << 1, 0;
  x << 0, 1;
  CHECK_NOTHROW(ObservedSample(y, z, x, {"x"}));
  Eigen::VectorXd bad_y = y;
  bad_y[0] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(ObservedSample(bad_y, z, x, {"x"}), ValidationError);
  CHECK_THROWS_AS(ObservedSample(y, z, x, {"x", "extra"}), ValidationError);
}
