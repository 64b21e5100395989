#include <doctest.h>

#include <cmath>
#include <map>
#include <random>
#include <set>

#include "cifrank/counterfactual.hpp"
#include "cifrank/error.hpp"
#include "cifrank/ltr.hpp"
#include "cifrank/synthgen.hpp"
#include "helpers.hpp"

using namespace cifrank;

namespace {

const std::vector<std::string> kSensitive{"G", "R"};

// G, R sensitive; F1, F2 covariates; Y outcome.
CausalModelSpec feature_spec() {
  CausalModelSpec spec;
  spec.vertices = {{"G", Role::kSensitive, ValueKind::kBinary, false},
                   {"R", Role::kSensitive, ValueKind::kBinary, false},
                   {"F1", Role::kCovariate, ValueKind::kContinuous, false},
                   {"F2", Role::kCovariate, ValueKind::kContinuous, false},
                   {"Y", Role::kOutcome, ValueKind::kContinuous, false}};
  spec.sensitive = kSensitive;
  spec.edges = {{"F1", "Y"}, {"F2", "Y"}, {"G", "Y"}, {"R", "Y"}};
  return spec;
}

Dataset feature_data(std::size_t n, std::uint64_t seed, double w1, double w2,
                     double noise) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> z;
  std::vector<double> g, r, f1, f2, y;
  for (std::size_t i = 0; i < n; ++i) {
    g.push_back(static_cast<double>(gen() % 2));
    r.push_back(static_cast<double>(gen() % 2));
    f1.push_back(z(gen));
    f2.push_back(z(gen));
    y.push_back(w1 * f1.back() + w2 * f2.back() + noise * z(gen));
  }
  return Dataset(Schema::from_model(feature_spec()), {g, r, f1, f2, y});
}

const std::vector<std::string> kFeatures{"F1", "F2"};

}  // namespace

TEST_CASE("analytic gradient matches central differences") {
  std::mt19937_64 gen(1);
  std::normal_distribution<double> z;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + gen() % 30, p = 1 + gen() % 4;
    std::vector<double> x(n * p), w(p), t(n);
    for (auto& v : x) v = z(gen);
    for (auto& v : w) v = z(gen);
    for (auto& v : t) v = 2 * z(gen);
    auto loss = [&](const std::vector<double>& weights) {
      std::vector<double> s(n, 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < p; ++j) s[i] += x[i * p + j] * weights[j];
      }
      return listwise_loss(s, t);
    };
    const auto grad = listwise_gradient(x, w, t);
    const double h = 1e-6;
    for (std::size_t j = 0; j < p; ++j) {
      auto up = w, down = w;
      up[j] += h;
      down[j] -= h;
      const double fd = (loss(up) - loss(down)) / (2 * h);
      CHECK(std::fabs(fd - grad[j]) <= 1e-6 * std::max(1.0, std::fabs(fd)));
    }
  }
}

TEST_CASE("loss is invariant to constant shifts of either list") {
  std::mt19937_64 gen(2);
  std::normal_distribution<double> z;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> s(25), t(25);
    for (auto& v : s) v = z(gen);
    for (auto& v : t) v = z(gen);
    const double base = listwise_loss(s, t);
    const double c = 10 * z(gen);
    auto s2 = s, t2 = t;
    for (auto& v : s2) v += c;
    for (auto& v : t2) v += c;
    CHECK(std::fabs(listwise_loss(s2, t) - base) <= 1e-12 * std::max(1.0, std::fabs(base)));
    CHECK(std::fabs(listwise_loss(s, t2) - base) <= 1e-12 * std::max(1.0, std::fabs(base)));
  }
  CHECK_THROWS_AS(listwise_loss(std::vector<double>{}, std::vector<double>{}), DataError);
}

TEST_CASE("loss is stable for large scores") {
  const std::vector<double> s{1000.0, 999.0, -1000.0};
  const std::vector<double> t{800.0, 0.0, 0.0};
  CHECK(std::isfinite(listwise_loss(s, t)));
}

TEST_CASE("training loss does not increase") {
  const auto d = feature_data(300, 3, 1.0, -0.5, 0.3);
  Hyperparams hp;
  hp.learning_rate = 1e-2;
  hp.tolerance = 0.0;
  double previous = INFINITY;
  for (std::size_t epochs = 1; epochs <= 40; ++epochs) {
    hp.epochs = epochs;
    const auto m = train_listwise(d, d.column("Y"), kFeatures, hp);
    CHECK(m.meta.epochs == epochs);
    CHECK(m.meta.final_loss <= previous + 1e-9);
    previous = m.meta.final_loss;
  }
}

TEST_CASE("a learnable target is ranked perfectly") {
  const auto d = feature_data(400, 4, 2.0, 0.0, 0.0);
  Hyperparams hp;
  hp.epochs = 500;
  const auto m = train_listwise(d, d.column("Y"), std::vector<std::string>{"F1"}, hp);
  CHECK(m.weights[0] > 0);
  const auto truth = rank_by_score(d, "Y", Direction::kDescending, 0);
  const auto pred = predict_ranking(m, d, 0);
  CHECK(average_precision(truth, pred, 40) == 1.0);
}

TEST_CASE("a negative relation gives a negative weight") {
  const auto d = feature_data(400, 5, -1.5, 0.0, 0.1);
  const auto m = train_listwise(d, d.column("Y"), std::vector<std::string>{"F1"});
  CHECK(m.weights[0] < 0);
}

TEST_CASE("separable data reaches high precision") {
  const auto train = feature_data(1000, 6, 1.0, 0.5, 0.05);
  const auto test = feature_data(1000, 7, 1.0, 0.5, 0.05);
  Hyperparams hp;
  hp.epochs = 1000;
  hp.learning_rate = 0.05;
  const auto m = train_listwise(train, train.column("Y"), kFeatures, hp);
  const auto ap = average_precision(rank_by_score(test, "Y", Direction::kDescending, 0),
                                    predict_ranking(m, test, 0), 100);
  CHECK(ap >= 0.9);
}

TEST_CASE("pure noise matches the random-permutation null") {
  const int seeds = 20;
  std::vector<double> trained, null;
  for (std::uint64_t s = 0; s < seeds; ++s) {
    const auto train = feature_data(1000, 100 + s, 0.0, 0.0, 1.0);
    const auto test = feature_data(1000, 200 + s, 0.0, 0.0, 1.0);
    const auto truth = rank_by_score(test, "Y", Direction::kDescending, 0);
    const auto m = train_listwise(train, train.column("Y"), kFeatures);
    trained.push_back(average_precision(truth, predict_ranking(m, test, s), 100));
    std::vector<double> noise(test.size());
    std::mt19937_64 gen(300 + s);
    std::uniform_real_distribution<double> u;
    for (auto& v : noise) v = u(gen);
    null.push_back(average_precision(truth, rank_scores(noise, Direction::kDescending, s), 100));
  }
  auto mean = [](const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m += x / static_cast<double>(v.size());
    return m;
  };
  double ss = 0.0;
  for (double x : null) ss += (x - mean(null)) * (x - mean(null));
  const double se = std::sqrt(ss / (seeds - 1) / seeds);
  CHECK(std::fabs(mean(trained) - mean(null)) <= 4 * std::sqrt(2.0) * se + 1e-3);
}

TEST_CASE("no features gives zero scores") {
  const auto d = feature_data(10, 8, 1.0, 0.0, 0.0);
  const auto m = train_listwise(d, d.column("Y"), std::vector<std::string>{});
  CHECK(m.weights.empty());
  for (double s : m.scores(d)) CHECK(s == 0.0);
}

TEST_CASE("training errors") {
  const auto d = feature_data(10, 9, 1.0, 0.0, 0.0);
  Hyperparams hp;
  hp.learning_rate = 0.0;
  CHECK_THROWS_AS(train_listwise(d, d.column("Y"), kFeatures, hp), ConfigError);
  CHECK_THROWS_AS(train_listwise(d, d.column("Y"), std::vector<std::string>{"Z"}), DataError);
  const std::vector<double> short_target{1.0};
  CHECK_THROWS_AS(train_listwise(d, short_target, kFeatures), DataError);

  std::vector<double> g{0, 1}, r{0, 1}, f1{1e300, -1e300}, f2{0, 0}, y{1, 0};
  const Dataset huge(Schema::from_model(feature_spec()), {g, r, f1, f2, y});
  hp.learning_rate = 1e300;
  hp.epochs = 5;
  try {
    train_listwise(huge, huge.column("Y"), kFeatures, hp);
    FAIL("expected divergence");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("epoch 1") != std::string::npos);
  }
}

TEST_CASE("model JSON round trip") {
  const auto d = feature_data(100, 10, 1.0, 2.0, 0.1);
  const auto m = train_listwise(d, d.column("Y"), kFeatures);
  const auto back = listwise_model_from_json(to_json(m));
  CHECK(back.weights == m.weights);
  CHECK(back.feature_names == m.feature_names);
  CHECK(back.meta.epochs == m.meta.epochs);
  CHECK(back.scores(d) == m.scores(d));
  CHECK_THROWS_AS(listwise_model_from_json({{"features", {"F1"}}, {"weights", {1.0, 2.0}}}),
                  ConfigError);
  CHECK_THROWS_AS(listwise_model_from_json({{"weights", {1.0}}}), ConfigError);
}

TEST_CASE("feature selection and resolving flags") {
  const auto spec = moving_company_model(false);
  CHECK(ltr_features(spec, false) == std::vector<std::string>{"X"});
  CHECK(ltr_features(spec, true) == std::vector<std::string>{"G", "R", "X"});
  CHECK(with_resolving(spec, true).resolving.at("X"));
  CHECK_FALSE(with_resolving(moving_company_model(true), false).resolving.at("X"));
  for (auto v : all_pipeline_variants()) CHECK(parse_pipeline_variant(to_string(v)) == v);
  CHECK_THROWS_AS(parse_pipeline_variant("cf"), ConfigError);
}

TEST_CASE("original pipeline recovers the observed ranking") {
  SynthConfig cfg;
  cfg.seed = 11;
  const auto train = generate(cfg);
  cfg.seed = 12;
  const auto test = generate(cfg);
  PipelineConfig pc;
  pc.k_values = {500};
  const auto result = run_pipeline(train, test, moving_company_model(false), pc);
  CHECK(result.model.weights[0] > 0);
  for (const auto& key : result.report.groups) {
    const auto& cell = result.report.per_group.at({key, 500});
    if (cell.sensitivity) {
      INFO(key.label());
      CHECK(*cell.sensitivity > 0.6);
    }
  }
  CHECK(result.report.global.at(500).y_utility_loss.value() < 0.1);
}

TEST_CASE("cf-LTR predictions do not depend on the observed group") {
  SynthConfig cfg;
  cfg.seed = 13;
  const auto train = generate(cfg);
  const auto spec = moving_company_model(false);
  const FittedModel fitted = fit_model(train, spec);
  // Two test sets sharing the noise but with different group labels, drawn
  // from the fitted equations.
  std::mt19937_64 gen(14);
  std::normal_distribution<double> z;
  std::vector<double> ex, ey;
  for (int i = 0; i < 500; ++i) ex.push_back(z(gen)), ey.push_back(0.25 * z(gen));
  auto make = [&](int shift) {
    std::vector<double> g, r, x, y;
    for (std::size_t i = 0; i < ex.size(); ++i) {
      const int code = static_cast<int>((i + static_cast<std::size_t>(shift)) % 4);
      std::map<std::string, double> v{{"G", code >> 1}, {"R", code & 1}};
      auto at = [&](const std::string& n) { return v.at(n); };
      v["X"] = fitted.equations.at("X").predict(at) + ex[i];
      v["Y"] = fitted.equations.at("Y").predict(at) + ey[i];
      g.push_back(v["G"]), r.push_back(v["R"]), x.push_back(v["X"]), y.push_back(v["Y"]);
    }
    return testing::m1_data(g, r, x, y);
  };
  const auto a = make(0), b = make(1);
  PipelineConfig pc;
  pc.variant = PipelineVariant::kNonResolvingCfLtr;
  pc.k_values = {50};
  pc.seed = 5;
  const auto ra = run_pipeline(train, a, spec, pc);
  const auto rb = run_pipeline(train, b, spec, pc);
  const CounterfactualConfig cf{default_baseline(spec), fitted, ResidualSource::kRecomputed};
  const auto sa = ra.model.scores(transform_dataset(a, cf));
  const auto sb = rb.model.scores(transform_dataset(b, cf));
  for (std::size_t i = 0; i < sa.size(); ++i) CHECK(sa[i] == doctest::Approx(sb[i]).epsilon(1e-9));
  CHECK(average_precision(ra.test_ranking, rb.test_ranking, 50) > 0.99);
}

TEST_CASE("dataset splits") {
  const auto d = feature_data(101, 15, 1.0, 0.0, 0.0);
  const auto [train, test] = split_dataset(d, 0.7, 3);
  CHECK(train.size() == 71);
  CHECK(test.size() == 30);
  std::set<std::string> ids;
  for (std::size_t i = 0; i < train.size(); ++i) ids.insert(train.id(i));
  for (std::size_t i = 0; i < test.size(); ++i) CHECK(ids.insert(test.id(i)).second);
  CHECK(ids.size() == 101);
  const auto again = split_dataset(d, 0.7, 3);
  CHECK(again.first == train);
  CHECK_FALSE(split_dataset(d, 0.7, 4).first == train);
  CHECK_THROWS_AS(split_dataset(d, 1.0, 0), ConfigError);
  const auto tiny = feature_data(2, 1, 1.0, 0.0, 0.0);
  CHECK_THROWS_AS(split_dataset(tiny, 0.1, 0), DataError);
}

TEST_CASE("summaries across splits") {
  SynthConfig cfg;
  std::vector<MetricReport> reports;
  for (std::uint64_t s = 0; s < 3; ++s) {
    cfg.seed = 20 + s;
    const auto train = generate(cfg);
    cfg.seed = 30 + s;
    const auto test = generate(cfg);
    PipelineConfig pc;
    pc.variant = PipelineVariant::kNonResolvingLtr;
    pc.k_values = {100};
    reports.push_back(run_pipeline(train, test, moving_company_model(false), pc).report);
  }
  const auto one = summarize(std::span(reports).first(1));
  for (const auto& row : one) {
    CHECK(row.count == 1);
    CHECK_FALSE(row.stddev.has_value());
  }
  const auto three = summarize(reports);
  bool found = false;
  for (const auto& row : three) {
    if (row.metric != "average_precision") continue;
    found = true;
    CHECK(row.count == 3);
    REQUIRE(row.stddev.has_value());
    double mean = 0.0;
    std::vector<double> v;
    for (const auto& r : reports) v.push_back(*r.global.at(100).average_precision);
    for (double x : v) mean += x / 3.0;
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    CHECK(row.mean == doctest::Approx(mean).epsilon(1e-12));
    CHECK(*row.stddev == doctest::Approx(std::sqrt(ss / 2.0)).epsilon(1e-12));
  }
  CHECK(found);
  CHECK(to_json(std::span<const SummaryRow>(three)).size() == three.size());
}
