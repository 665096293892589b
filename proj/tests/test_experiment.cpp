#include "doctest.h"

#include "clusterpost/experiment.hpp"
#include "clusterpost/io.hpp"
#include "support.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace clusterpost;

namespace {

std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("clusterpost_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

ResultRow sample_row() {
  ResultRow r;
  r.method = "compressed";
  r.trial = 2;
  r.dataset = "demo, \"quoted\"";
  r.N = 1000;
  r.c = 37;
  r.delta = 0.1;
  r.rho = 0.037;
  r.approx_kl = 1.0 / 3.0;
  r.test_error_or_mse = 0.25;
  r.t1 = 0.125;
  r.t2 = 2.5e-3;
  r.grad_evals = 123456789;
  return r;
}

/// Two tight regression clusters split into train and test.
std::pair<Dataset, Dataset> two_cluster_regression(Index n) {
  std::mt19937_64 rng(3);
  mat X(2, n);
  vec y(n);
  const vec beta = (vec(2) << 1.0, -0.5).finished();
  for (Index i = 0; i < n; ++i) {
    const vec centre = i % 2 ? vec::Constant(2, 0.5) : vec::Constant(2, -0.5);
    X.col(i) = centre + testing_support::gaussian_vec(2, rng, 0.001);
    y(i) = beta.dot(X.col(i)) + std::normal_distribution<real>(0, 0.001)(rng);
  }
  const Dataset ds = testing_support::make_dataset(X, y, TaskMode::regression);
  return split(ds, 0.25, 1);
}

ExperimentConfig small_config() {
  ExperimentConfig c;
  c.name = "two-clusters";
  c.deltas = {0.1};
  c.nn = NeighborMode::exact;
  c.noise_variance = 0.01;
  c.hmc.step_size = 0.01;
  c.hmc.num_samples = 200;
  c.vb.num_iterations = 200;
  c.vb.learning_rate = 1e-4;
  return c;
}

}  // namespace

TEST_CASE("config file and overrides") {
  std::istringstream in(
      "# experiment\n"
      "dataset = sensit\n"
      "mode = regression\n"
      "deltas = 0.2, 0.14\n"
      "nn = exact\n"
      "eps = 0.005   # tuned\n"
      "draws = 300\n"
      "vb_iters = 50\n"
      "seed = 9\n");
  ExperimentConfig c = parse_config(in);
  CHECK(c.name == "sensit");
  CHECK(c.mode == TaskMode::regression);
  CHECK(c.deltas == std::vector<real>{0.2, 0.14});
  CHECK(c.nn == NeighborMode::exact);
  CHECK(c.hmc.step_size == 0.005);
  CHECK(c.hmc.num_samples == 300);
  CHECK(c.hmc.num_leapfrog == 10);
  CHECK(c.vb.num_iterations == 50);
  CHECK(c.seed == 9);
  apply_config_value(c, "eps", "0.01");
  CHECK(c.hmc.step_size == 0.01);

  std::istringstream bad("colour = blue\n");
  CHECK_THROWS_AS(parse_config(bad), ConfigError);
  std::istringstream bad_value("draws = many\n");
  CHECK_THROWS_AS(parse_config(bad_value), ConfigError);
  std::istringstream no_eq("draws 5\n");
  CHECK_THROWS_AS(parse_config(no_eq), ConfigError);
}

TEST_CASE("CSV report round-trips") {
  ResultRow plain = sample_row();
  plain.dataset = "plain";
  plain.approx_kl.reset();
  plain.trial = -1;
  const std::vector<ResultRow> rows{sample_row(), plain};
  const std::string csv = report(rows, ReportFormat::csv);
  std::istringstream in(csv);
  CHECK(parse_csv_report(in) == rows);

  const std::string one = report({sample_row()}, ReportFormat::csv);
  CHECK(std::count(one.begin(), one.end(), '\n') == 2);
  CHECK(one.rfind("method,trial,dataset,N,c,delta,rho,approx_kl,test_error_or_mse,t1,t2,grad_evals\n", 0) == 0);
}

TEST_CASE("JSON report keeps n/a as null") {
  ResultRow r = sample_row();
  r.approx_kl.reset();
  const std::string json = report({r}, ReportFormat::json);
  CHECK(json.find("\"approx_kl\": null") != std::string::npos);
  const auto back = parse_json_report(json);
  REQUIRE(back.size() == 1);
  CHECK(back[0] == r);
  CHECK_THROWS_AS(parse_json_report("{"), DataError);
}

TEST_CASE("table report aligns columns") {
  ResultRow a = sample_row(), b = sample_row();
  b.method = "vb";
  b.approx_kl.reset();
  const std::string table = report({a, b}, ReportFormat::table);
  std::istringstream in(table);
  std::string line;
  std::vector<std::size_t> widths;
  while (std::getline(in, line)) widths.push_back(line.size());
  REQUIRE(widths.size() == 3);
  CHECK(widths[0] == widths[1]);
  CHECK(widths[1] == widths[2]);
  CHECK(table.find("n/a") != std::string::npos);
  CHECK(parse_report_format("table") == ReportFormat::table);
  CHECK_THROWS_AS(parse_report_format("xml"), ConfigError);
}

TEST_CASE("clustering artifact round-trips") {
  const auto dir = scratch("artifact");
  const auto [train, test] = two_cluster_regression(40);
  const auto r = cluster_dataset(train, 0.1, oracle_factory(NeighborMode::exact, 0.1));
  write_clustering(dir / "c.txt", r);
  const auto back = read_clustering(dir / "c.txt");
  CHECK(back.num_clusters() == r.num_clusters());
  CHECK(back.total_points == r.total_points);
  CHECK(back.delta == r.delta);
  CHECK(back.target_scale == r.target_scale);
  for (std::size_t j = 0; j < r.num_clusters(); ++j) {
    CHECK(back.clusters[j].centroid == r.clusters[j].centroid);
    CHECK(back.clusters[j].count == r.clusters[j].count);
  }
  const WeightedDataset a = compress(train, r), b = compress(train, back);
  CHECK((a.labels - b.labels).norm() < 1e-12);

  std::istringstream truncated("# clusterpost clustering v1\n4 2 2 0.1 0.5 0\n2 0 0 1 1\n");
  CHECK_THROWS_AS(read_clustering(truncated), DataError);
  std::istringstream garbage("# clusterpost clustering v1\n4 2 1 0.1 0.25 0\n4 0 0 1\n");
  CHECK_THROWS_AS(read_clustering(garbage), ParseError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("histogram export") {
  const auto dir = scratch("hist");
  mat X(1, 3);
  X << 0, 5, 9;
  mat Y(1, 8);
  Y << 0, 0, 0, 0, 0, 5, 9, 9;
  const Dataset ds = testing_support::make_dataset(Y, vec::Zero(8), TaskMode::classification, 1);
  const auto r = cluster_dataset(ds, 0.1, oracle_factory(NeighborMode::exact, 0.1));
  export_histogram(r, dir / "h.csv");
  const auto back = read_histogram(dir / "h.csv");
  const std::vector<std::pair<std::size_t, std::size_t>> expected{{1, 1}, {2, 1}, {5, 1}};
  CHECK(back == expected);

  const std::vector<std::pair<std::size_t, std::size_t>> counts{{1, 2}, {5, 1}};
  export_histogram(counts, dir / "g.csv");
  std::ifstream in(dir / "g.csv");
  std::stringstream text;
  text << in.rdbuf();
  CHECK(text.str() == "cluster_size,count\n1,2\n5,1\n");
  CHECK_THROWS_AS(export_histogram(counts, dir / "missing" / "x.csv"), DataError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("VB posterior round-trips") {
  const auto dir = scratch("vb");
  VbPosterior q;
  q.mean = vec{{0.25, -1.0 / 3.0, 1e-17}};
  q.log_std = vec{{-2.5, 0.0, std::log(0.1)}};
  write_vb(dir / "q.csv", q);
  const VbPosterior back = read_vb(dir / "q.csv");
  CHECK(back.mean == q.mean);
  CHECK(back.log_std == q.log_std);

  std::ofstream(dir / "bad.csv") << "1,2\n3\n";
  CHECK_THROWS_AS(read_vb(dir / "bad.csv"), DataError);
  std::ofstream(dir / "junk.csv") << "1,x\n3,4\n";
  CHECK_THROWS_AS(read_vb(dir / "junk.csv"), ParseError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("two-cluster pipeline") {
  const auto [train, test] = two_cluster_regression(200);
  const ExperimentConfig config = small_config();
  const auto result = run_experiment(config, train, test);
  CHECK(result.failures.empty());
  REQUIRE(result.rows.size() == 3);
  CHECK(result.rows[0].method == "exact");
  CHECK(result.rows[1].method == "compressed");
  CHECK(result.rows[2].method == "vb");
  const ResultRow& comp = result.rows[1];
  CHECK(comp.c == 2);
  CHECK(comp.rho == doctest::Approx(2.0 / static_cast<real>(train.size())));
  CHECK(comp.rho == doctest::Approx(static_cast<real>(comp.c) / static_cast<real>(comp.N)));
  CHECK(comp.grad_evals * train.size() == result.rows[0].grad_evals * comp.c);
  for (const auto& r : result.rows) {
    CHECK(r.t1 >= 0);
    CHECK(r.t2 >= 0);
  }

  auto strip = [](std::vector<ResultRow> rows) {
    for (auto& r : rows) r.t1 = r.t2 = 0;
    return rows;
  };
  CHECK(strip(run_experiment(config, train, test).rows) == strip(result.rows));
}

TEST_CASE("delta below the minimum distance reproduces the exact row") {
  const auto [train, test] = two_cluster_regression(60);
  real sigma = 0;
  const real dmin = testing_support::min_pairwise_distance(regression_embedding(train, sigma));
  ExperimentConfig config = small_config();
  config.deltas = {0.4 * dmin};
  config.run_vb = false;
  const auto rows = run_experiment(config, train, test).rows;
  REQUIRE(rows.size() == 2);
  CHECK(rows[1].c == train.size());
  CHECK(rows[1].test_error_or_mse == rows[0].test_error_or_mse);
  CHECK(rows[1].grad_evals == rows[0].grad_evals);
  CHECK(*rows[1].approx_kl == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("trials add a mean row per method") {
  const auto [train, test] = two_cluster_regression(80);
  ExperimentConfig config = small_config();
  config.trials = 2;
  config.shuffle = true;
  config.hmc.num_samples = 50;
  const auto rows = run_experiment(config, train, test).rows;
  CHECK(rows.size() == 9);
  const auto means = std::count_if(rows.begin(), rows.end(), [](const ResultRow& r) { return r.trial == -1; });
  CHECK(means == 3);
}

TEST_CASE("rows are written to the output directory") {
  const auto dir = scratch("run");
  const auto [train, test] = two_cluster_regression(40);
  ExperimentConfig config = small_config();
  config.output_dir = dir;
  config.hmc.num_samples = 30;
  const auto rows = run_experiment(config, train, test).rows;
  std::ifstream in(dir / "results.csv");
  CHECK(parse_csv_report(in) == rows);
  CHECK(std::filesystem::exists(dir / "results.json"));
  CHECK_FALSE(std::filesystem::exists(dir / "results.csv.tmp"));
  bool saw_clusters = false;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    saw_clusters = saw_clusters || e.path().extension() == ".clusters";
  CHECK(saw_clusters);
  std::filesystem::remove_all(dir);
}

TEST_CASE("failing rows are logged and skipped") {
  const auto [train, test] = two_cluster_regression(40);
  ExperimentConfig config = small_config();
  config.vb.learning_rate = 1e6;
  config.vb.num_iterations = 100;
  const auto result = run_experiment(config, train, test);
  CHECK(result.rows.size() == 2);
  REQUIRE(result.failures.size() == 1);
  CHECK(result.failures[0].find("vb") != std::string::npos);
}

TEST_CASE("file-driven run") {
  const auto dir = scratch("files");
  const auto [train, test] = two_cluster_regression(60);
  std::ofstream(dir / "train.txt") << to_libsvm(train);
  std::ofstream(dir / "test.txt") << to_libsvm(test);
  ExperimentConfig config = small_config();
  config.train_path = dir / "train.txt";
  config.test_path = dir / "test.txt";
  config.mode = TaskMode::regression;
  config.hmc.num_samples = 30;
  const auto result = run_experiment(config);
  CHECK(result.rows.size() == 3);
  CHECK(result.rows[0].N == train.size());
  config.train_path = dir / "nope.txt";
  CHECK_THROWS_AS(run_experiment(config), ConfigError);
  config.train_path = dir / "train.txt";
  config.deltas = {-1};
  CHECK_THROWS_AS(run_experiment(config), ConfigError);
  std::filesystem::remove_all(dir);
}
