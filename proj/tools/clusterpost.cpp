#include "clusterpost/chain.hpp"
#include "clusterpost/clustering.hpp"
#include "clusterpost/dataset.hpp"
#include "clusterpost/experiment.hpp"
#include "clusterpost/hmc.hpp"
#include "clusterpost/io.hpp"
#include "clusterpost/metrics.hpp"
#include "clusterpost/model.hpp"
#include "clusterpost/vb.hpp"

#include "CLI11.hpp"

#include <curl/curl.h>
#include <openssl/evp.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace clusterpost;

namespace {

enum Exit { kOk = 0, kConfig = 1, kData = 2, kNumerical = 3 };

struct DataArgs {
  std::string data;
  std::string test;
  std::string mode = "classification";
  Index dim = 0;
  bool normalize = true;
};

void add_data_options(CLI::App* app, DataArgs& a, bool need_data = true) {
  auto* opt = app->add_option("--data", a.data, "training file in LIBSVM format");
  if (need_data) opt->required();
  app->add_option("--test", a.test, "held-out file sharing the training dimension and classes");
  app->add_option("--mode", a.mode, "classification or regression")
      ->check(CLI::IsMember({"classification", "regression"}));
  app->add_option("--dim", a.dim, "feature dimension override");
  app->add_flag("--normalize,!--no-normalize", a.normalize, "divide features by the training max norm (default on)");
}

TaskMode task_mode(const std::string& name) {
  return name == "regression" ? TaskMode::regression : TaskMode::classification;
}

ParseOptions parse_options(const DataArgs& a) {
  ParseOptions o;
  o.mode = task_mode(a.mode);
  if (a.dim > 0) o.dim = a.dim;
  return o;
}

std::pair<Dataset, Dataset> load(const DataArgs& a) {
  Dataset train, test;
  if (a.test.empty()) {
    train = read_libsvm(a.data, parse_options(a));
  } else {
    std::tie(train, test) = read_libsvm_pair(a.data, a.test, parse_options(a));
  }
  if (a.normalize) {
    train = normalize(train);
    if (!test.empty()) test = scale_features(test, train.norm_constant);
  }
  return {std::move(train), std::move(test)};
}

struct ClusterArgs {
  real delta = 0.1;
  std::string nn = "lsh";
  real lsh_w = 0;
  int lsh_k = 4;
  int lsh_l = 8;
  std::uint64_t lsh_seed = 1;
  std::optional<std::uint64_t> shuffle;
};

void add_cluster_options(CLI::App* app, ClusterArgs& a) {
  app->add_option("--delta", a.delta, "clustering radius");
  app->add_option("--nn", a.nn, "neighbor oracle")->check(CLI::IsMember({"lsh", "exact"}));
  app->add_option("--lsh-w", a.lsh_w, "LSH bucket width (default 2x the query radius)");
  app->add_option("--lsh-k", a.lsh_k, "hashes per table");
  app->add_option("--lsh-l", a.lsh_l, "number of tables");
  app->add_option("--lsh-seed", a.lsh_seed, "LSH projection seed");
  app->add_option("--shuffle", a.shuffle, "shuffle the stream with this seed");
}

LshParams lsh_params(const ClusterArgs& a) {
  if (!(a.delta > 0)) throw ConfigError("clustering radius delta must be positive");
  return {a.lsh_w, a.lsh_k, a.lsh_l, a.lsh_seed};
}

struct ModelArgs {
  real lambda = 1.0;
  real gamma = 1.0;
};

void add_model_options(CLI::App* app, ModelArgs& a) {
  app->add_option("--lambda", a.lambda, "prior variance");
  app->add_option("--gamma", a.gamma, "noise variance (regression)");
}

template <class F>
auto with_model(const Dataset& ds, const ModelArgs& m, F&& f) {
  if (ds.mode == TaskMode::regression) return f(LinearModel{ds.dim, m.lambda, m.gamma});
  return f(LogisticModel{ds.dim, std::max(ds.num_classes(), 2), m.lambda});
}

// fetch

std::size_t write_to_stream(char* ptr, std::size_t size, std::size_t n, void* user) {
  auto* out = static_cast<std::ofstream*>(user);
  out->write(ptr, static_cast<std::streamsize>(size * n));
  return *out ? size * n : 0;
}

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  char buf[1 << 16];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  std::string hex;
  char byte[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(byte, sizeof byte, "%02x", digest[i]);
    hex += byte;
  }
  return hex;
}

int run_fetch(const std::string& url, const fs::path& out, const std::string& sha256) {
  auto tmp = out;
  tmp += ".part";
  {
    std::ofstream file(tmp, std::ios::binary | std::ios::trunc);
    if (!file) throw DataError("cannot write " + tmp.string());
    CURL* curl = curl_easy_init();
    if (!curl) throw DataError("cannot initialise libcurl");
    curl_easy_setopt(curl, CURLOPT_URL, url.c_str());
    curl_easy_setopt(curl, CURLOPT_FOLLOWLOCATION, 1L);
    curl_easy_setopt(curl, CURLOPT_FAILONERROR, 1L);
    curl_easy_setopt(curl, CURLOPT_WRITEFUNCTION, write_to_stream);
    curl_easy_setopt(curl, CURLOPT_WRITEDATA, &file);
    const CURLcode rc = curl_easy_perform(curl);
    curl_easy_cleanup(curl);
    if (rc != CURLE_OK) {
      fs::remove(tmp);
      throw DataError("download of " + url + " failed: " + curl_easy_strerror(rc));
    }
  }
  const std::string got = sha256_file(tmp);
  if (!sha256.empty() && got != sha256) {
    fs::remove(tmp);
    throw DataError("checksum mismatch for " + url + ": expected " + sha256 + ", got " + got);
  }
  fs::rename(tmp, out);
  std::cout << got << "  " << out.string() << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Posterior compression by radius-bounded clustering, HMC and VB baselines"};
  app.require_subcommand(1);

  // fetch
  std::string url, fetch_out, checksum;
  auto* fetch = app.add_subcommand("fetch", "download a dataset and verify its SHA-256");
  fetch->add_option("--url", url, "source URL")->required();
  fetch->add_option("--out", fetch_out, "destination file")->required();
  fetch->add_option("--sha256", checksum, "expected hex digest (printed when omitted)");

  // cluster
  DataArgs cluster_data;
  ClusterArgs cluster_args;
  std::string cluster_out, hist_out;
  auto* cluster_cmd = app.add_subcommand("cluster", "cluster a dataset and write the clustering artifact");
  add_data_options(cluster_cmd, cluster_data);
  add_cluster_options(cluster_cmd, cluster_args);
  cluster_cmd->add_option("--out", cluster_out, "clustering artifact path")->required();
  cluster_cmd->add_option("--hist", hist_out, "cluster-size histogram CSV path");

  // sample
  DataArgs sample_data;
  ClusterArgs sample_cluster;
  ModelArgs sample_model;
  HmcConfig hmc;
  std::string posterior = "exact", clusters_in, chain_out;
  auto* sample_cmd = app.add_subcommand("sample", "draw HMC samples from the exact or compressed posterior");
  add_data_options(sample_cmd, sample_data);
  add_cluster_options(sample_cmd, sample_cluster);
  add_model_options(sample_cmd, sample_model);
  sample_cmd->add_option("--posterior", posterior, "exact or compressed")->check(CLI::IsMember({"exact", "compressed"}));
  sample_cmd->add_option("--clusters", clusters_in, "clustering artifact (compressed; otherwise clusters at --delta)");
  sample_cmd->add_option("--eps", hmc.step_size, "leapfrog step size");
  sample_cmd->add_option("--leapfrog", hmc.num_leapfrog, "leapfrog steps per proposal");
  sample_cmd->add_option("--draws", hmc.num_samples, "post burn-in draws");
  sample_cmd->add_option("--burnin", hmc.burn_in, "burn-in draws (default 10% of --draws)");
  sample_cmd->add_option("--seed", hmc.seed, "sampler seed");
  sample_cmd->add_option("--out", chain_out, "chain CSV path")->required();

  // vb
  DataArgs vb_data;
  ModelArgs vb_model;
  VbConfig vb;
  std::string vb_out;
  auto* vb_cmd = app.add_subcommand("vb", "fit the mean-field Gaussian baseline on the full data");
  add_data_options(vb_cmd, vb_data);
  add_model_options(vb_cmd, vb_model);
  vb_cmd->add_option("--iters", vb.num_iterations, "iterations");
  vb_cmd->add_option("--lr", vb.learning_rate, "initial learning rate");
  vb_cmd->add_option("--mc", vb.mc_samples_per_step, "Monte Carlo samples per step");
  vb_cmd->add_option("--decay", vb.decay_factor, "learning-rate decay factor");
  vb_cmd->add_option("--decay-every", vb.decay_every, "iterations between decays");
  vb_cmd->add_flag("--crn", vb.common_random_numbers, "reuse one standardized set of base samples");
  vb_cmd->add_option("--seed", vb.seed, "seed");
  vb_cmd->add_option("--out", vb_out, "posterior CSV path (mean line, log_std line)")->required();

  // evaluate
  DataArgs eval_data;
  ModelArgs eval_model;
  std::string eval_chain, eval_vb, eval_reference, rule = "mean";
  Index kl_cap = 5000;
  auto* eval_cmd = app.add_subcommand("evaluate", "test error or MSE of a chain, optionally approxKL to a reference");
  add_data_options(eval_cmd, eval_data);
  add_model_options(eval_cmd, eval_model);
  eval_cmd->add_option("--chain", eval_chain, "chain CSV");
  eval_cmd->add_option("--vb", eval_vb, "VB posterior CSV");
  eval_cmd->add_option("--reference", eval_reference, "reference chain for approxKL (e.g. the exact run)");
  eval_cmd->add_option("--prediction", rule, "mean or average")->check(CLI::IsMember({"mean", "average"}));
  eval_cmd->add_option("--kl-dim-cap", kl_cap, "skip approxKL above this many parameters");

  // run
  std::string config_path;
  std::vector<std::string> overrides;
  std::string run_format = "table";
  auto* run_cmd = app.add_subcommand("run", "full pipeline: exact, compressed per delta, and VB rows");
  run_cmd->add_option("--config", config_path, "key = value experiment file");
  run_cmd->add_option("--set", overrides, "key=value override (repeatable; wins over the file)");
  run_cmd->add_option("--format", run_format, "csv, json or table")->check(CLI::IsMember({"csv", "json", "table"}));

  // report
  std::string report_in, report_format = "table";
  auto* report_cmd = app.add_subcommand("report", "re-render a results CSV");
  report_cmd->add_option("--in", report_in, "results CSV")->required();
  report_cmd->add_option("--format", report_format, "csv, json or table")
      ->check(CLI::IsMember({"csv", "json", "table"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }

  try {
    if (*fetch) {
      curl_global_init(CURL_GLOBAL_DEFAULT);
      const int rc = run_fetch(url, fetch_out, checksum);
      curl_global_cleanup();
      return rc;
    }

    if (*cluster_cmd) {
      const auto start = std::chrono::steady_clock::now();
      const auto [train, test] = load(cluster_data);
      const auto r = cluster_dataset(train, cluster_args.delta,
                                     oracle_factory(parse_neighbor_mode(cluster_args.nn), cluster_args.delta,
                                                    lsh_params(cluster_args)),
                                     cluster_args.shuffle);
      const real t1 = std::chrono::duration<real>(std::chrono::steady_clock::now() - start).count();
      write_clustering(cluster_out, r);
      if (!hist_out.empty()) export_histogram(r, hist_out);
      std::printf("N=%zu c=%zu delta=%g rho=%.4f%% max_radius=%.6g t1=%.3fs\n", r.total_points, r.num_clusters(),
                  r.delta, 100 * r.ratio(), r.max_radius(), t1);
      return kOk;
    }

    if (*sample_cmd) {
      const auto [train, test] = load(sample_data);
      WeightedDataset wds;
      if (posterior == "exact") {
        wds = unit_weights(train);
      } else {
        const ClusteringResult r =
            clusters_in.empty()
                ? cluster_dataset(train, sample_cluster.delta,
                                  oracle_factory(parse_neighbor_mode(sample_cluster.nn), sample_cluster.delta,
                                                 lsh_params(sample_cluster)),
                                  sample_cluster.shuffle)
                : read_clustering(clusters_in);
        wds = compress(train, r);
      }
      const SampleChain chain = with_model(train, sample_model, [&](const auto& m) { return sample(m, wds, hmc); });
      write_chain_csv(fs::path(chain_out), chain);
      std::printf("draws=%lld accept=%.3f t2=%.3fs grad_evals=%llu likelihood_terms=%llu\n",
                  static_cast<long long>(chain.num_draws()), chain.accept_rate, chain.wall_time_seconds,
                  static_cast<unsigned long long>(chain.grad_evals),
                  static_cast<unsigned long long>(chain.likelihood_terms));
      return kOk;
    }

    if (*vb_cmd) {
      const auto [train, test] = load(vb_data);
      const VbFit fit = with_model(train, vb_model, [&](const auto& m) { return fit_vb(m, train, vb); });
      write_vb(vb_out, fit.posterior);
      std::printf("iterations=%d final_elbo=%.6g\n", vb.num_iterations,
                  fit.elbo_trace.empty() ? 0.0 : fit.elbo_trace.back());
      return kOk;
    }

    if (*eval_cmd) {
      if (eval_data.test.empty()) throw ConfigError("evaluate needs --test");
      if (eval_chain.empty() == eval_vb.empty()) throw ConfigError("give exactly one of --chain and --vb");
      const auto [train, test] = load(eval_data);
      const PredictionRule pr = rule == "mean" ? PredictionRule::posterior_mean : PredictionRule::predictive_average;
      mat draws;
      GaussianMoments<> moments;
      if (!eval_chain.empty()) {
        draws = read_chain_csv(fs::path(eval_chain)).draws;
      } else {
        const VbPosterior q = read_vb(eval_vb);
        std::mt19937_64 rng(1);
        draws = sample_vb(q, 1000, rng);
        moments = to_moments(q);
      }
      const real score = with_model(train, eval_model, [&](const auto& m) { return evaluate(m, draws, test, pr); });
      std::printf("%s=%.6g\n", train.mode == TaskMode::regression ? "test_mse" : "test_error", score);
      if (!eval_reference.empty()) {
        const SampleChain ref = read_chain_csv(fs::path(eval_reference));
        if (ref.num_params() > kl_cap) {
          std::printf("approx_kl=n/a\n");
        } else {
          const real kl = eval_vb.empty() ? gaussian_kl(fit_moments(ref), fit_moments(draws))
                                          : gaussian_kl(fit_moments(ref), moments);
          std::printf("approx_kl=%.6g\n", std::max(0.0, kl));
        }
      }
      return kOk;
    }

    if (*run_cmd) {
      ExperimentConfig config = config_path.empty() ? ExperimentConfig{} : read_config(config_path);
      for (const auto& kv : overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got " + kv);
        apply_config_value(config, kv.substr(0, eq), kv.substr(eq + 1));
      }
      const auto result = run_experiment(config);
      std::cout << report(result.rows, parse_report_format(run_format));
      for (const auto& f : result.failures) std::cerr << "failed row: " << f << '\n';
      return result.rows.empty() ? kNumerical : kOk;
    }

    if (*report_cmd) {
      std::ifstream in(report_in);
      if (!in) throw DataError("cannot open " + report_in);
      const auto rows = parse_csv_report(in);
      if (rows.empty()) throw DataError("no rows in " + report_in);
      std::cout << report(rows, parse_report_format(report_format));
      return kOk;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return kNumerical;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  }
  return kOk;
}
