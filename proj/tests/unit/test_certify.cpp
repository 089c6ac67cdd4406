#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include <boost/math/distributions/binomial.hpp>
#include <boost/math/distributions/normal.hpp>

#include "repdensity/certify.hpp"
#include "repdensity/errors.hpp"

using namespace repdensity;

namespace {

// Root of p^n = alpha by plain bisection on the binomial tail P[X >= n].
double all_success_bound(std::size_t n, double alpha) {
  double lo = 0.0, hi = 1.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (std::pow(mid, static_cast<double>(n)) < alpha ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

BatchClassifier constant_classifier(int label) {
  return [label](const Eigen::MatrixXd& batch) { return std::vector<int>(static_cast<std::size_t>(batch.rows()), label); };
}

// Class 0 iff the first noisy coordinate falls below `cut`; at x = 0 the
// top-class probability is exactly Phi(cut / sigma).
BatchClassifier threshold_classifier(double cut) {
  return [cut](const Eigen::MatrixXd& batch) {
    std::vector<int> out(static_cast<std::size_t>(batch.rows()));
    for (Eigen::Index i = 0; i < batch.rows(); ++i) out[static_cast<std::size_t>(i)] = batch(i, 0) < cut ? 0 : 1;
    return out;
  };
}

}  // namespace

TEST_CASE("Clopper-Pearson lower bound") {
  CHECK(clopper_pearson_lower(0, 100, 1e-3) == 0.0);
  const double oracle = all_success_bound(100, 1e-3);
  CHECK(oracle == doctest::Approx(0.93325).epsilon(1e-5));
  CHECK(std::abs(clopper_pearson_lower(100, 100, 1e-3) - oracle) < 1e-10);
  CHECK(std::abs(clopper_pearson_lower(100, 100, 1e-3) - 0.93325) < 1e-5);

  for (std::size_t k = 1; k < 50; ++k) CHECK(clopper_pearson_lower(k, 50, 0.01) < static_cast<double>(k) / 50.0);

  double previous = -1.0;
  for (std::size_t k = 0; k <= 1000; k += 7) {
    const double b = clopper_pearson_lower(k, 1000, 1e-3);
    CHECK(b > previous);
    previous = b;
  }

  // The bound is the alpha-quantile of Beta(k, n - k + 1).
  for (std::size_t k : {3u, 40u, 97u}) {
    const double b = clopper_pearson_lower(k, 100, 0.05);
    CHECK(regularized_beta(b, static_cast<double>(k), static_cast<double>(100 - k + 1)) == doctest::Approx(0.05).epsilon(1e-8));
  }

  CHECK_THROWS_AS(clopper_pearson_lower(5, 4, 0.1), ParameterError);
  CHECK_THROWS_AS(clopper_pearson_lower(0, 0, 0.1), ParameterError);
  CHECK_THROWS_AS(clopper_pearson_lower(1, 4, 1.0), ParameterError);
}

TEST_CASE("normal quantile") {
  const boost::math::normal_distribution<double> standard;
  for (double p : {1e-300, 1e-100, 1e-20, 1e-8, 1e-3, 0.02425, 0.1, 0.3, 0.5, 0.6, 0.9, 0.97575, 0.999, 1.0 - 1e-8,
                   1.0 - 1e-15}) {
    CHECK(std::abs(normal_quantile(p) - boost::math::quantile(standard, p)) < 1e-12 * std::max(1.0, std::abs(boost::math::quantile(standard, p))));
  }
  for (double x : {-5.0, -1.0, 0.0, 0.5, 3.0}) CHECK(normal_cdf(x) == doctest::Approx(boost::math::cdf(standard, x)).epsilon(1e-14));
  CHECK(normal_quantile(0.5) == 0.0);
  CHECK(std::isinf(normal_quantile(0.0)));
  CHECK_THROWS_AS(normal_quantile(1.5), ParameterError);

  double previous = -1e300;
  for (double p = 0.501; p < 1.0; p += 0.001) {
    const double r = normal_quantile(p);
    CHECK(r > previous);
    previous = r;
  }
}

TEST_CASE("abstention boundary and radius formula") {
  CHECK(certification_decision(2, 0.5, 0.5).abstain);
  CHECK(certification_decision(2, 0.3, 0.5).abstain);
  const auto just_above = certification_decision(2, std::nextafter(0.5, 1.0), 0.5);
  CHECK_FALSE(just_above.abstain);
  CHECK(just_above.radius > 0.0);
  const auto c = certification_decision(4, 0.87, 0.25);
  CHECK(c.predicted == 4);
  CHECK(std::abs(c.radius - 0.25 * normal_quantile(0.87)) < 1e-9);
}

TEST_CASE("certify with a constant classifier") {
  CertifyConfig config;
  Rng rng = make_rng(1);
  const auto out = certify(constant_classifier(3), Eigen::VectorXd::Zero(5), config, rng);
  REQUIRE_FALSE(out.abstain);
  CHECK(out.predicted == 3);
  const double expected = std::pow(1e-3, 1.0 / 100000.0);
  CHECK(std::abs(out.p_lower - expected) < 1e-11);
  CHECK(std::abs(out.radius - 0.5 * normal_quantile(out.p_lower)) < 1e-9);
  CHECK(out.radius > 1.9);
}

TEST_CASE("certify abstains on a uniform ten-way classifier") {
  // Certification needs k with a lower bound above 1/2; under p = 0.1 that
  // many hits has negligible probability.
  CertifyConfig config;
  config.n = 10000;
  std::size_t needed = 0;
  while (clopper_pearson_lower(needed, config.n, config.alpha) <= 0.5) ++needed;
  const boost::math::binomial_distribution<double> hits(static_cast<double>(config.n), 0.1);
  CHECK(boost::math::cdf(boost::math::complement(hits, static_cast<double>(needed) - 1.0)) < 1e-3);

  Rng noise = make_rng(2);
  const BatchClassifier uniform = [&noise](const Eigen::MatrixXd& batch) {
    std::uniform_int_distribution<int> pick(0, 9);
    std::vector<int> out(static_cast<std::size_t>(batch.rows()));
    for (auto& v : out) v = pick(noise);
    return out;
  };
  Rng rng = make_rng(3);
  for (int rep = 0; rep < 20; ++rep) CHECK(certify(uniform, Eigen::VectorXd::Zero(2), config, rng).abstain);
}

TEST_CASE("classifier failures surface as evaluation errors") {
  CertifyConfig config;
  config.n = 10;
  config.n0 = 5;
  Rng rng = make_rng(4);
  const BatchClassifier broken = [](const Eigen::MatrixXd&) -> std::vector<int> { throw std::runtime_error("boom"); };
  CHECK_THROWS_AS(certify(broken, Eigen::VectorXd::Zero(1), config, rng), EvaluationError);
  const BatchClassifier short_reply = [](const Eigen::MatrixXd&) { return std::vector<int>{0}; };
  CHECK_THROWS_AS(certify(short_reply, Eigen::VectorXd::Zero(1), config, rng), EvaluationError);
  const BatchClassifier negative = [](const Eigen::MatrixXd& b) { return std::vector<int>(static_cast<std::size_t>(b.rows()), -2); };
  CHECK_THROWS_AS(certify(negative, Eigen::VectorXd::Zero(1), config, rng), EvaluationError);

  CertifyConfig bad;
  bad.sigma = 0.0;
  CHECK_THROWS_AS(bad.validate(), ParameterError);
  bad = CertifyConfig{};
  bad.alpha = 1.0;
  CHECK_THROWS_AS(bad.validate(), ParameterError);
}

TEST_CASE("batching does not change the outcome") {
  CertifyConfig a;
  a.n = 5000;
  CertifyConfig b = a;
  b.batch_size = 7;
  Rng r1 = make_rng(5), r2 = make_rng(5);
  const auto oa = certify(threshold_classifier(0.2), Eigen::VectorXd::Zero(3), a, r1);
  const auto ob = certify(threshold_classifier(0.2), Eigen::VectorXd::Zero(3), b, r2);
  CHECK(oa.p_lower == ob.p_lower);
  CHECK(oa.predicted == ob.predicted);
}

TEST_CASE("soundness smoke test") {
  CertifyConfig config;
  config.n = 10000;
  config.n0 = 100;
  const double p_star = 0.8;
  const BatchClassifier f = threshold_classifier(config.sigma * normal_quantile(p_star));
  // Exact coverage of the bound at this (n, p*): P[k >= k*] with k* the
  // first count whose bound exceeds p*.
  std::size_t k_star = 0;
  while (clopper_pearson_lower(k_star, config.n, config.alpha) <= p_star) ++k_star;
  const boost::math::binomial_distribution<double> hits(static_cast<double>(config.n), p_star);
  CHECK(boost::math::cdf(boost::math::complement(hits, static_cast<double>(k_star) - 1.0)) <= config.alpha);

  Rng rng = make_rng(6);
  const int runs = 10000;
  int violations = 0;
  for (int run = 0; run < runs; ++run) {
    const auto out = certify(f, Eigen::VectorXd::Zero(1), config, rng);
    if (!out.abstain && out.predicted == 0 && out.p_lower > p_star) ++violations;
  }
  const boost::math::binomial_distribution<double> tolerance(runs, config.alpha);
  const double allowed = boost::math::quantile(boost::math::complement(tolerance, 1e-4));
  MESSAGE("violations " << violations << " of " << runs << ", allowed " << allowed);
  CHECK(violations <= allowed);
}

TEST_CASE("certification report") {
  const auto cert = [](int cls, double r) { return CertifyOutcome{false, cls, r, normal_cdf(r / 0.5)}; };
  const auto abst = CertifyOutcome::abstention(0.3);
  const std::vector<LabelledOutcome> outcomes{
      {0, 1, abst}, {0, 2, abst},
      {1, 1, cert(1, 0.4)}, {1, 2, cert(2, 0.4)}, {1, 2, cert(2, 0.4)},
      {3, 1, cert(1, 0.2)}, {3, 1, cert(2, 0.6)}, {3, 2, abst}, {3, 2, cert(2, 1.0)},
  };
  const auto rows = certification_report(outcomes, 4);
  REQUIRE(rows.size() == 4);

  CHECK(rows[0].count == 2);
  CHECK(rows[0].classification_rate == 0.0);
  CHECK_FALSE(rows[0].mean_radius.has_value());
  CHECK_FALSE(rows[0].std_radius.has_value());
  CHECK(*rows[0].f_score_abstain_as_error == 0.0);

  CHECK(rows[1].classification_rate == 1.0);
  CHECK(*rows[1].mean_radius == doctest::Approx(0.4));
  CHECK(*rows[1].std_radius == doctest::Approx(0.0));
  CHECK(*rows[1].f_score_certified_only == 1.0);

  CHECK(rows[2].count == 0);
  CHECK_FALSE(rows[2].mean_radius.has_value());
  CHECK_FALSE(rows[2].f_score_abstain_as_error.has_value());

  CHECK(rows[3].count == 4);
  CHECK(rows[3].certified == 3);
  CHECK(rows[3].classification_rate == doctest::Approx(0.75));
  CHECK(*rows[3].mean_radius == doctest::Approx(0.6));
  CHECK(*rows[3].std_radius == doctest::Approx(std::sqrt((0.16 + 0.0 + 0.16) / 3.0)));
  // Certified only: truth {1,1,2} vs pred {1,2,2}: F(1) = 2/3, F(2) = 2/3.
  CHECK(*rows[3].f_score_certified_only == doctest::Approx(2.0 / 3.0));
  // Abstention as a miss: truth {1,1,2,2} vs pred {1,2,-,2}: F(1) = 2/3, F(2) = 2/(2+1+1) = 1/2.
  CHECK(*rows[3].f_score_abstain_as_error == doctest::Approx((2.0 / 3.0 + 0.5) / 2.0));

  const std::vector<LabelledOutcome> stray{{9, 0, abst}};
  CHECK_THROWS_AS(certification_report(stray, 4), ParameterError);
}
