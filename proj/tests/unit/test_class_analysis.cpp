#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "repdensity/class_analysis.hpp"
#include "repdensity/errors.hpp"
#include "repdensity/synthetic.hpp"

using namespace repdensity;

namespace {

SamplerConfig short_config(std::uint64_t seed) {
  SamplerConfig c;
  c.sweeps = 100;
  c.burn_in = 60;
  c.thin = 4;
  c.seed = seed;
  return c;
}

ClassModels fit_all(const RepresentationDataset& data, std::uint64_t seed) {
  ClassModels models;
  for (const auto& [label, rows] : split_by_class(data)) {
    models.emplace(label, fit_predictive_model(rows.rows, derive_prior(rows.rows), short_config(seed + label)));
  }
  return models;
}

GaussianMixture isotropic(const Eigen::VectorXd& mean, double sd) {
  const auto d = mean.size();
  return GaussianMixture::single(mean, sd * sd * Eigen::MatrixXd::Identity(d, d));
}

// Straightforward nested-loop recount, kept deliberately naive.
std::vector<double> recount(const TrialRecords& records) {
  std::vector<double> out;
  for (std::size_t i = 0; i < records.example_count; ++i) {
    double in_hits = 0, in_total = 0, out_hits = 0, out_total = 0;
    for (const auto& trial : records.trials) {
      if (trial.included[i]) {
        in_total += 1;
        if (trial.correct[i]) in_hits += 1;
      } else {
        out_total += 1;
        if (trial.correct[i]) out_hits += 1;
      }
    }
    out.push_back(in_hits / in_total - out_hits / out_total);
  }
  return out;
}

TrialRecords random_table(std::size_t examples, std::size_t trials, Rng& rng) {
  std::bernoulli_distribution coin(0.5);
  TrialRecords records;
  records.example_count = examples;
  for (std::size_t t = 0; t < trials; ++t) {
    TrialRecord trial;
    for (std::size_t i = 0; i < examples; ++i) {
      trial.included.push_back(coin(rng));
      trial.correct.push_back(coin(rng));
    }
    records.trials.push_back(trial);
  }
  // Guarantee every example is seen on both sides.
  for (std::size_t i = 0; i < examples; ++i) {
    records.trials[0].included[i] = true;
    records.trials[1].included[i] = false;
  }
  return records;
}

ClassDensityReport ramp_report(std::size_t n) {
  ClassDensityReport report;
  for (std::size_t i = 0; i < n; ++i) {
    // Scrambled order so that sorting matters.
    const double value = static_cast<double>((i * 37) % n) - 0.5 * static_cast<double>(n);
    report.records.push_back({i, static_cast<std::uint32_t>(i % 2), value});
  }
  return report;
}

}  // namespace

TEST_CASE("class log-density statistics") {
  Rng rng = make_rng(1);
  const RepresentationDataset data =
      sample_labelled({isotropic(Eigen::Vector2d(0, 0), 1.0), isotropic(Eigen::Vector2d(1, 1), 2.0)}, 400, rng);
  const ClassModels models = fit_all(data, 10);
  const auto report = class_log_density_stats(models, data);

  REQUIRE(report.records.size() == 800);
  for (std::size_t i = 0; i < report.records.size(); ++i) {
    CHECK(report.records[i].example_id == i);
    CHECK(report.records[i].class_id == data.labels[i]);
  }
  REQUIRE(report.classes.size() == 2);
  // Sorted ascending: the dispersed class comes first.
  CHECK(report.classes[0].class_id == 1);
  CHECK(report.classes[1].class_id == 0);
  // Differential entropy gap of doubling the scale in d = 2.
  CHECK(report.classes[1].mean - report.classes[0].mean == doctest::Approx(2.0 * std::log(2.0)).epsilon(0.1));

  for (const auto& stat : report.classes) {
    double sum = 0.0;
    double sq = 0.0;
    std::size_t count = 0;
    for (const auto& rec : report.records) {
      if (rec.class_id != stat.class_id) continue;
      sum += rec.log_density;
      ++count;
    }
    const double mean = sum / static_cast<double>(count);
    for (const auto& rec : report.records)
      if (rec.class_id == stat.class_id) sq += (rec.log_density - mean) * (rec.log_density - mean);
    CHECK(stat.count == count);
    CHECK(std::abs(stat.mean - mean) < 1e-10);
    CHECK(stat.std == doctest::Approx(std::sqrt(sq / static_cast<double>(count))));
  }

  ClassModels partial = models;
  partial.erase(1);
  CHECK_THROWS_AS(class_log_density_stats(partial, data), ConfigurationError);
}

TEST_CASE("single-example class has zero spread") {
  RepresentationDataset data;
  data.rows.resize(4, 1);
  data.rows << 0.0, 0.5, 1.0, 9.0;
  data.labels = {0, 0, 0, 4};
  const NIWParams prior{Eigen::VectorXd::Zero(1), 1.0, 3.0, Eigen::MatrixXd::Constant(1, 1, 1.0)};
  ClassModels models;
  models.emplace(0, PredictiveModel(data.rows.topRows(3), prior, {Snapshot{1.0, {0, 0, 0}}}));
  models.emplace(4, PredictiveModel(data.rows.bottomRows(1), prior, {Snapshot{1.0, {0}}}));
  const auto report = class_log_density_stats(models, data);
  const auto it = std::find_if(report.classes.begin(), report.classes.end(), [](const auto& c) { return c.class_id == 4; });
  REQUIRE(it != report.classes.end());
  CHECK(it->count == 1);
  CHECK(it->std == 0.0);
}

TEST_CASE("density groups") {
  const std::vector<double> means{-10.0, -10.1, 5.0, 5.2};
  const auto g = detect_density_groups(means);
  CHECK(g.group == std::vector<int>{0, 0, 1, 1});
  CHECK(g.threshold == doctest::Approx(-2.5));
  CHECK(g.bimodal());

  const std::vector<double> shuffled{5.2, -10.0, 5.0, -10.1};
  CHECK(detect_density_groups(shuffled).group == std::vector<int>{1, 0, 1, 0});

  const std::vector<double> flat(5, -3.0);
  const auto u = detect_density_groups(flat);
  CHECK(u.unimodal);
  CHECK_FALSE(u.bimodal());
  CHECK(std::all_of(u.group.begin(), u.group.end(), [](int v) { return v == 0; }));

  const std::vector<double> one{1.0};
  CHECK_THROWS_AS(detect_density_groups(one), ParameterError);

  // Exact split against a brute-force scan over all thresholds.
  Rng rng = make_rng(2);
  std::normal_distribution<double> normal;
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<double> v(9);
    for (auto& x : v) x = normal(rng);
    std::vector<double> sorted = v;
    std::sort(sorted.begin(), sorted.end());
    double best = 1e300;
    double best_threshold = 0.0;
    for (std::size_t cut = 1; cut < sorted.size(); ++cut) {
      double cost = 0.0;
      for (auto [lo, hi] : {std::pair{std::size_t{0}, cut}, std::pair{cut, sorted.size()}}) {
        const double m = std::accumulate(sorted.begin() + lo, sorted.begin() + hi, 0.0) / static_cast<double>(hi - lo);
        for (std::size_t i = lo; i < hi; ++i) cost += (sorted[i] - m) * (sorted[i] - m);
      }
      if (cost < best) {
        best = cost;
        best_threshold = 0.5 * (sorted[cut - 1] + sorted[cut]);
      }
    }
    const auto found = detect_density_groups(v);
    CHECK(found.threshold == doctest::Approx(best_threshold));
    for (std::size_t i = 0; i < v.size(); ++i) CHECK(found.group[i] == (v[i] > best_threshold ? 1 : 0));
  }

  int wins = 0;
  for (int rep = 0; rep < 100; ++rep) {
    std::vector<double> uni(20), bi(20);
    for (auto& x : uni) x = normal(rng);
    for (std::size_t i = 0; i < bi.size(); ++i) bi[i] = normal(rng) + (i < 10 ? 0.0 : 6.0);
    wins += detect_density_groups(uni).separation < detect_density_groups(bi).separation;
  }
  CHECK(wins >= 95);
}

TEST_CASE("memorization from trials") {
  TrialRecords full;
  full.example_count = 1;
  full.trials = {{{true}, {true}}, {{true}, {true}}, {{false}, {false}}, {{false}, {false}}};
  CHECK(memorization_from_trials(full) == std::vector<double>{1.0});

  TrialRecords balanced;
  balanced.example_count = 1;
  balanced.trials = {{{true}, {true}}, {{true}, {false}}, {{false}, {false}}, {{false}, {true}}};
  CHECK(memorization_from_trials(balanced) == std::vector<double>{0.0});

  Rng rng = make_rng(3);
  for (int table = 0; table < 100; ++table) {
    const auto records = random_table(20, 50, rng);
    CHECK(memorization_from_trials(records) == recount(records));
  }

  TrialRecords undefined;
  undefined.example_count = 3;
  undefined.trials = {{{true, true, false}, {true, true, true}}, {{true, false, false}, {true, true, true}}};
  try {
    memorization_from_trials(undefined);
    FAIL("expected UndefinedScoreError");
  } catch (const UndefinedScoreError& e) {
    CHECK(e.example_ids() == std::vector<std::size_t>{0, 2});
  }

  TrialRecords ragged;
  ragged.example_count = 2;
  ragged.trials = {{{true}, {true, false}}};
  CHECK_THROWS_AS(ragged.validate(), ValidationError);
}

TEST_CASE("trial record files") {
  Rng rng = make_rng(4);
  const auto records = random_table(11, 5, rng);
  std::stringstream buffer;
  write_trial_records(records, buffer);
  const std::string bytes = buffer.str();
  CHECK(bytes.substr(0, 4) == "TRLS");
  CHECK(bytes.size() == 4 + 2 + 2 + 8 + 8 + 5 * 2 * 2);

  // Bitmasks are least-significant-bit first.
  const auto mask_byte = static_cast<unsigned char>(bytes[24]);
  for (int bit = 0; bit < 8; ++bit) CHECK(((mask_byte >> bit) & 1) == static_cast<int>(records.trials[0].included[bit]));

  std::stringstream in(bytes);
  const auto back = read_trial_records(in);
  CHECK(back.example_count == 11);
  REQUIRE(back.trials.size() == 5);
  for (std::size_t t = 0; t < 5; ++t) {
    CHECK(back.trials[t].included == records.trials[t].included);
    CHECK(back.trials[t].correct == records.trials[t].correct);
  }

  std::string bad = bytes;
  bad[1] = '?';
  std::stringstream b1(bad);
  CHECK_THROWS_AS(read_trial_records(b1), FormatError);
  std::stringstream b2(bytes.substr(0, bytes.size() - 1));
  CHECK_THROWS_AS(read_trial_records(b2), CorruptionError);
}

TEST_CASE("density bins") {
  SUBCASE("exact division") {
    const auto binning = density_bins(ramp_report(100), {}, {}, 50);
    REQUIRE(binning.bins.size() == 50);
    for (const auto& bin : binning.bins) CHECK(bin.size() == 2);
  }
  SUBCASE("remainder goes to the lowest-density bins") {
    const auto report = ramp_report(103);
    const auto binning = density_bins(report, {}, {}, 50);
    REQUIRE(binning.bins.size() == 50);
    for (std::size_t b = 0; b < 50; ++b) CHECK(binning.bins[b].size() == (b < 3 ? 3u : 2u));
    std::vector<std::size_t> all;
    for (const auto& bin : binning.bins) all.insert(all.end(), bin.begin(), bin.end());
    for (std::size_t i = 1; i < all.size(); ++i)
      CHECK(report.records[all[i - 1]].log_density <= report.records[all[i]].log_density);
    for (std::size_t b = 1; b < 50; ++b)
      CHECK(binning.summaries[b - 1].mean_log_density <= binning.summaries[b].mean_log_density);
    const auto again = density_bins(report, {}, {}, 50);
    CHECK(again.bins == binning.bins);
  }
  SUBCASE("summaries") {
    ClassDensityReport report;
    report.records = {{0, 0, -3.0}, {1, 1, -1.0}, {2, 0, -2.0}, {3, 1, 4.0}};
    const std::vector<double> mem{0.2, 0.8, 0.4, 1.0};
    const auto binning = density_bins(report, mem, {{0, 0}, {1, 1}}, 2);
    CHECK(binning.bins[0] == std::vector<std::size_t>{0, 2});
    CHECK(binning.bins[1] == std::vector<std::size_t>{1, 3});
    CHECK(binning.summaries[0].mean_log_density == doctest::Approx(-2.5));
    CHECK(binning.summaries[0].std_log_density == doctest::Approx(0.5));
    CHECK(*binning.summaries[0].mean_memorization == doctest::Approx(0.3));
    CHECK(*binning.summaries[0].std_memorization == doctest::Approx(0.1));
    CHECK(binning.summaries[0].low_fraction == 1.0);
    CHECK(binning.summaries[1].high_fraction == 1.0);
    CHECK(binning.summaries[1].mean_log_density == doctest::Approx(1.5));

    const auto bare = density_bins(report, {}, {}, 2);
    CHECK_FALSE(bare.summaries[0].mean_memorization.has_value());
  }
  SUBCASE("too many bins") { CHECK_THROWS_AS(density_bins(ramp_report(5), {}, {}, 6), ParameterError); }
}

TEST_CASE("between-class KL matrix") {
  Rng rng = make_rng(5);
  const RepresentationDataset data = sample_labelled({isotropic(Eigen::Vector2d(0, 0), 1.0), isotropic(Eigen::Vector2d(0, 0), 1.0),
                                                      isotropic(Eigen::Vector2d(10, 0), 1.0), isotropic(Eigen::Vector2d(0, 3), 1.0)},
                                                     150, rng);
  ClassModels models = fit_all(data, 20);
  KLConfig config;
  config.samples_per_snapshot = 256;
  config.seed = 6;
  const auto m = between_class_kl_matrix(models, config, 100);
  REQUIRE(m.classes.size() == 4);
  for (Eigen::Index i = 0; i < 4; ++i) CHECK(m.estimate(i, i) >= -3.0 * m.std_error(i, i));
  CHECK(m.estimate(0, 2) > m.estimate(0, 1) + 5.0);
  CHECK(m.estimate(2, 0) > m.estimate(1, 0) + 5.0);
  CHECK(m.off_diagonal_mean > 0.0);

  const auto threaded = between_class_kl_matrix(models, config, 100, 3);
  CHECK(threaded.estimate == m.estimate);
  CHECK(threaded.std_error == m.std_error);

  CHECK_THROWS_AS(between_class_kl_matrix(models, config, 1000), InsufficientDataError);
}

TEST_CASE("macro F-score on hand-built confusion matrices") {
  const std::vector<int> truth{0, 0, 0, 1, 1, 2, 2, 2, 2};
  const std::vector<int> pred{0, 0, 1, 1, 2, 2, 2, 0, 2};
  const auto f = macro_f_score(truth, pred);
  CHECK(f.per_class.at(0) == doctest::Approx(2.0 / 3.0));
  CHECK(f.per_class.at(1) == doctest::Approx(0.5));
  CHECK(f.per_class.at(2) == doctest::Approx(0.75));
  CHECK(f.macro == doctest::Approx((2.0 / 3.0 + 0.5 + 0.75) / 3.0));

  const std::vector<int> t2{0, 1, 1, 2};
  const std::vector<int> p2{-1, 1, -1, 2};
  const auto g = macro_f_score(t2, p2, -1);
  CHECK(g.per_class.size() == 3);
  CHECK(g.per_class.at(0) == 0.0);
  CHECK(g.per_class.at(1) == doctest::Approx(2.0 / 3.0));
  CHECK(g.per_class.at(2) == 1.0);

  const std::vector<int> perfect{3, 1, 3};
  CHECK(macro_f_score(perfect, perfect).macro == 1.0);
  const std::vector<int> shorter{1};
  CHECK_THROWS_AS(macro_f_score(perfect, shorter), ParameterError);
}

TEST_CASE("generative classification") {
  Rng rng = make_rng(7);
  const NIWParams prior{Eigen::VectorXd::Zero(1), 1.0, 3.0, Eigen::MatrixXd::Constant(1, 1, 1.0)};
  Eigen::MatrixXd rows(3, 1);
  rows << -1.0, 0.0, 1.0;

  SUBCASE("degenerate prior") {
    ClassModels models;
    models.emplace(2, PredictiveModel(rows, prior, {Snapshot{1.0, {0, 0, 0}}}));
    models.emplace(5, PredictiveModel(rows.array() + 50.0, prior, {Snapshot{1.0, {0, 0, 0}}}));
    const Eigen::MatrixXd queries = Eigen::MatrixXd::Constant(4, 1, 50.0);
    const auto c = generative_classify(models, {{2, 1.0}, {5, 0.0}}, queries);
    for (auto p : c.predicted) CHECK(p == 2);
  }
  SUBCASE("ties go to the smaller id") {
    ClassModels models;
    models.emplace(7, PredictiveModel(rows, prior, {Snapshot{1.0, {0, 0, 1}}}));
    models.emplace(3, PredictiveModel(rows, prior, {Snapshot{1.0, {0, 0, 1}}}));
    const auto c = generative_classify(models, {{3, 0.5}, {7, 0.5}}, Eigen::MatrixXd::Constant(2, 1, 0.3));
    CHECK(c.predicted == std::vector<std::uint32_t>{3, 3});
  }
  SUBCASE("input checks") {
    ClassModels models;
    models.emplace(0, PredictiveModel(rows, prior, {Snapshot{1.0, {0, 0, 0}}}));
    CHECK_THROWS_AS(generative_classify(models, {{0, 0.9}}, Eigen::MatrixXd::Zero(1, 1)), ParameterError);
    CHECK_THROWS_AS(generative_classify(models, {{0, 1.0}}, Eigen::MatrixXd::Zero(1, 2)), ParameterError);
    CHECK_THROWS_AS(generative_classify(models, {{0, 0.5}, {1, 0.5}}, Eigen::MatrixXd::Zero(1, 1)), ConfigurationError);
  }
  SUBCASE("separated classes against the Bayes rule") {
    std::vector<GaussianMixture> truth;
    for (int k = 0; k < 5; ++k) truth.push_back(isotropic(Eigen::Vector2d(10.0 * k, 5.0 * (k % 2)), 1.0));
    const auto train = sample_labelled(truth, 400, rng);
    const auto test = sample_labelled(truth, 100, rng);
    const ClassModels models = fit_all(train, 30);
    const auto priors = empirical_class_priors(train.labels);
    CHECK(priors.at(0) == doctest::Approx(0.2));
    const auto c = generative_classify(models, priors, test.rows, test.labels);
    REQUIRE(c.scores.has_value());
    CHECK(c.scores->macro >= 0.95);
    std::size_t agree = 0;
    for (Eigen::Index i = 0; i < test.rows.rows(); ++i) {
      std::uint32_t best = 0;
      for (std::uint32_t k = 1; k < 5; ++k)
        if (truth[k].log_pdf(test.rows.row(i).transpose()) > truth[best].log_pdf(test.rows.row(i).transpose())) best = k;
      agree += best == c.predicted[static_cast<std::size_t>(i)];
    }
    CHECK(static_cast<double>(agree) >= 0.9 * static_cast<double>(test.rows.rows()));
  }
}

TEST_CASE("memorization subsets") {
  const std::vector<std::uint32_t> labels(30, 0);
  const std::vector<double> zeros(30, 0.0);
  CHECK_THROWS_AS(select_memorization_subsets(zeros, labels, 0.9, 1, 0), EmptySubsetError);

  std::vector<double> scores(30);
  std::vector<std::uint32_t> mixed(30);
  for (std::size_t i = 0; i < 30; ++i) {
    scores[i] = i < 10 ? 0.95 : 0.01 * static_cast<double>(i);
    mixed[i] = static_cast<std::uint32_t>(i % 2);
  }
  const auto s = select_memorization_subsets(scores, mixed, 0.9, 3, 11);
  CHECK(s.memorized.size() == 10);
  CHECK(s.least_memorized.size() == 10);
  CHECK(s.random.size() == 10);
  for (auto i : s.least_memorized) CHECK(i >= 10);
  for (auto i : s.least_memorized) CHECK(i < 20);
  const auto again = select_memorization_subsets(scores, mixed, 0.9, 3, 11);
  CHECK(again.random == s.random);
  CHECK(select_memorization_subsets(scores, mixed, 0.9, 100, 11).retained_classes.empty());
}
