#include "clusterpost/experiment.hpp"

#include "clusterpost/clustering.hpp"
#include "clusterpost/io.hpp"
#include "clusterpost/metrics.hpp"

#include "json.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace clusterpost {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

real to_real(const std::string& key, const std::string& v) {
  real out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError(key + ": not a number: " + v);
  return out;
}

long long to_int(const std::string& key, const std::string& v) {
  long long out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError(key + ": not an integer: " + v);
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key + ": not a boolean: " + v);
}

real seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<real>(std::chrono::steady_clock::now() - start).count();
}

std::string format_real(real v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string delta_tag(real v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

void apply_config_value(ExperimentConfig& c, const std::string& key, const std::string& value) {
  const std::string v = trim(value);
  if (key == "name" || key == "dataset") c.name = v;
  else if (key == "train") c.train_path = v;
  else if (key == "test") c.test_path = v;
  else if (key == "test_fraction") c.test_fraction = to_real(key, v);
  else if (key == "mode") {
    if (v == "classification") c.mode = TaskMode::classification;
    else if (v == "regression") c.mode = TaskMode::regression;
    else throw ConfigError("mode must be classification or regression");
  } else if (key == "normalize") c.normalize = to_bool(key, v);
  else if (key == "deltas" || key == "delta") {
    c.deltas.clear();
    std::stringstream s(v);
    std::string item;
    while (std::getline(s, item, ',')) c.deltas.push_back(to_real(key, trim(item)));
  } else if (key == "nn") c.nn = parse_neighbor_mode(v);
  else if (key == "lsh_w") c.lsh.bucket_width = to_real(key, v);
  else if (key == "lsh_k") c.lsh.hashes_per_table = static_cast<int>(to_int(key, v));
  else if (key == "lsh_l") c.lsh.num_tables = static_cast<int>(to_int(key, v));
  else if (key == "lambda" || key == "prior_variance") c.prior_variance = to_real(key, v);
  else if (key == "gamma" || key == "noise_variance") c.noise_variance = to_real(key, v);
  else if (key == "eps") c.hmc.step_size = to_real(key, v);
  else if (key == "leapfrog") c.hmc.num_leapfrog = static_cast<int>(to_int(key, v));
  else if (key == "draws") c.hmc.num_samples = static_cast<int>(to_int(key, v));
  else if (key == "burnin") c.hmc.burn_in = static_cast<int>(to_int(key, v));
  else if (key == "vb") c.run_vb = to_bool(key, v);
  else if (key == "vb_iters") c.vb.num_iterations = static_cast<int>(to_int(key, v));
  else if (key == "vb_lr") c.vb.learning_rate = to_real(key, v);
  else if (key == "vb_mc") c.vb.mc_samples_per_step = static_cast<int>(to_int(key, v));
  else if (key == "vb_decay") c.vb.decay_factor = to_real(key, v);
  else if (key == "vb_decay_every") c.vb.decay_every = static_cast<int>(to_int(key, v));
  else if (key == "trials") c.trials = static_cast<int>(to_int(key, v));
  else if (key == "shuffle") c.shuffle = to_bool(key, v);
  else if (key == "kl_dim_cap") c.kl_dim_cap = to_int(key, v);
  else if (key == "prediction") {
    if (v == "mean") c.prediction = PredictionRule::posterior_mean;
    else if (v == "average") c.prediction = PredictionRule::predictive_average;
    else throw ConfigError("prediction must be mean or average");
  } else if (key == "output") c.output_dir = v;
  else if (key == "seed") c.seed = static_cast<std::uint64_t>(to_int(key, v));
  else throw ConfigError("unknown config key: " + key);
}

ExperimentConfig parse_config(std::istream& in, ExperimentConfig base) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    apply_config_value(base, trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  return base;
}

ExperimentConfig read_config(const std::filesystem::path& path, ExperimentConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  return parse_config(in, std::move(base));
}

namespace {

void validate(const ExperimentConfig& c) {
  if (c.deltas.empty()) throw ConfigError("at least one delta is required");
  for (real d : c.deltas)
    if (!(d > 0)) throw ConfigError("deltas must be positive");
  if (c.trials < 1) throw ConfigError("trials must be at least 1");
  if (!(c.prior_variance > 0) || !(c.noise_variance > 0)) throw ConfigError("variances must be positive");
  if (!(c.test_fraction > 0 && c.test_fraction < 1)) throw ConfigError("test_fraction must lie in (0, 1)");
}

template <PosteriorModel Model>
std::vector<ResultRow> run_trials(const ExperimentConfig& config, const Model& model, const Dataset& train,
                                  const Dataset& test, real load_seconds, std::vector<std::string>& failures) {
  std::vector<ResultRow> rows;
  const WeightedDataset exact_data = unit_weights(train);
  const bool moments = model.num_params() <= config.kl_dim_cap;
  auto base_row = [&](const char* method, int trial) {
    ResultRow r;
    r.method = method;
    r.trial = trial;
    r.dataset = config.name;
    r.N = train.size();
    r.c = train.size();
    return r;
  };
  auto fail = [&](const std::string& what, const std::exception& e) {
    failures.push_back(what + ": " + e.what());
    std::cerr << "row aborted (" << what << "): " << e.what() << '\n';
  };

  for (int trial = 0; trial < config.trials; ++trial) {
    HmcConfig hmc = config.hmc;
    hmc.seed = config.hmc.seed + static_cast<std::uint64_t>(trial);

    std::optional<SampleChain> exact_chain;
    try {
      ResultRow r = base_row("exact", trial);
      r.t1 = load_seconds;
      exact_chain = sample(model, exact_data, hmc);
      r.t2 = exact_chain->wall_time_seconds;
      r.grad_evals = exact_chain->likelihood_terms;
      r.test_error_or_mse = evaluate(model, *exact_chain, test, config.prediction);
      if (moments) r.approx_kl = 0.0;
      rows.push_back(r);
    } catch (const std::exception& e) {
      fail("exact trial " + std::to_string(trial), e);
    }

    for (real delta : config.deltas) {
      try {
        ResultRow r = base_row("compressed", trial);
        r.delta = delta;
        LshParams lsh = config.lsh;
        lsh.seed += static_cast<std::uint64_t>(trial);
        std::optional<std::uint64_t> shuffle;
        if (config.shuffle) shuffle = config.seed + static_cast<std::uint64_t>(trial);
        const auto start = std::chrono::steady_clock::now();
        const ClusteringResult clustering = cluster_dataset(train, delta, oracle_factory(config.nn, delta, lsh), shuffle);
        r.t1 = load_seconds + seconds_since(start);
        r.c = clustering.num_clusters();
        r.rho = clustering.ratio();
        if (!config.output_dir.empty()) {
          const std::string tag = config.name + "_delta" + delta_tag(delta) + "_trial" + std::to_string(trial);
          write_clustering(config.output_dir / (tag + ".clusters"), clustering);
          export_histogram(clustering, config.output_dir / (tag + "_hist.csv"));
        }
        const WeightedDataset compressed = compress(train, clustering);
        const SampleChain chain = sample(model, compressed, hmc);
        r.t2 = chain.wall_time_seconds;
        r.grad_evals = chain.likelihood_terms;
        r.test_error_or_mse = evaluate(model, chain, test, config.prediction);
        if (moments && exact_chain) r.approx_kl = std::max(0.0, approx_kl(*exact_chain, chain));
        rows.push_back(r);
      } catch (const std::exception& e) {
        fail("compressed delta " + format_real(delta) + " trial " + std::to_string(trial), e);
      }
    }

    if (!config.run_vb) continue;
    try {
      ResultRow r = base_row("vb", trial);
      r.t1 = load_seconds;
      VbConfig vb = config.vb;
      vb.seed = config.vb.seed + static_cast<std::uint64_t>(trial);
      const auto start = std::chrono::steady_clock::now();
      const VbFit fit = fit_vb(model, exact_data, vb);
      r.t2 = seconds_since(start);
      r.grad_evals = static_cast<std::uint64_t>(vb.num_iterations) *
                     static_cast<std::uint64_t>(vb.mc_samples_per_step) * exact_data.size();
      std::mt19937_64 rng(vb.seed);
      const mat draws = sample_vb(fit.posterior, std::max(config.hmc.num_samples, 1), rng);
      r.test_error_or_mse = evaluate(model, draws, test, config.prediction);
      if (moments && exact_chain)
        r.approx_kl = std::max(0.0, gaussian_kl(fit_moments(*exact_chain), to_moments(fit.posterior)));
      rows.push_back(r);
    } catch (const std::exception& e) {
      fail("vb trial " + std::to_string(trial), e);
    }
  }
  return rows;
}

ExperimentResult run_loaded(const ExperimentConfig& config, const Dataset& train, const Dataset& test,
                            real load_seconds) {
  validate(config);
  if (train.empty() || test.empty()) throw DataError("train and test sets must be nonempty");
  if (train.mode != test.mode || train.dim != test.dim) throw DataError("train and test sets disagree");
  ExperimentResult result;
  if (train.mode == TaskMode::regression) {
    const LinearModel model{train.dim, config.prior_variance, config.noise_variance};
    result.rows = run_trials(config, model, train, test, load_seconds, result.failures);
  } else {
    const LogisticModel model{train.dim, std::max(train.num_classes(), 2), config.prior_variance};
    result.rows = run_trials(config, model, train, test, load_seconds, result.failures);
  }
  if (config.trials > 1) {
    const auto means = mean_rows(result.rows);
    result.rows.insert(result.rows.end(), means.begin(), means.end());
  }
  if (!config.output_dir.empty()) {
    std::filesystem::create_directories(config.output_dir);
    write_file_atomic(config.output_dir / "results.csv", report(result.rows, ReportFormat::csv));
    write_file_atomic(config.output_dir / "results.json", report(result.rows, ReportFormat::json));
  }
  return result;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config, const Dataset& train, const Dataset& test) {
  if (!config.output_dir.empty()) std::filesystem::create_directories(config.output_dir);
  return run_loaded(config, train, test, 0.0);
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
  validate(config);
  if (config.train_path.empty()) throw ConfigError("no training file configured");
  if (!std::filesystem::exists(config.train_path)) throw ConfigError("missing file " + config.train_path.string());
  if (!config.test_path.empty() && !std::filesystem::exists(config.test_path))
    throw ConfigError("missing file " + config.test_path.string());
  if (!config.output_dir.empty()) std::filesystem::create_directories(config.output_dir);

  const auto start = std::chrono::steady_clock::now();
  ParseOptions options;
  options.mode = config.mode;
  Dataset train, test;
  if (config.test_path.empty()) {
    std::tie(train, test) = split(read_libsvm(config.train_path, options), config.test_fraction, config.seed);
  } else {
    std::tie(train, test) = read_libsvm_pair(config.train_path, config.test_path, options);
  }
  if (config.normalize) {
    train = normalize(train);
    test = scale_features(test, train.norm_constant);
  }
  return run_loaded(config, train, test, seconds_since(start));
}

std::vector<ResultRow> mean_rows(const std::vector<ResultRow>& rows) {
  std::vector<ResultRow> out;
  std::vector<int> counts;
  std::vector<int> kl_counts;
  for (const ResultRow& r : rows) {
    if (r.trial < 0) continue;
    auto it = std::find_if(out.begin(), out.end(),
                           [&](const ResultRow& m) { return m.method == r.method && m.delta == r.delta; });
    if (it == out.end()) {
      ResultRow m = r;
      m.trial = -1;
      m.c = 0;
      m.rho = m.test_error_or_mse = m.t1 = m.t2 = 0;
      m.grad_evals = 0;
      m.approx_kl = 0.0;
      out.push_back(m);
      counts.push_back(0);
      kl_counts.push_back(0);
      it = out.end() - 1;
    }
    const auto k = static_cast<std::size_t>(it - out.begin());
    ++counts[k];
    it->c += r.c;
    it->rho += r.rho;
    it->test_error_or_mse += r.test_error_or_mse;
    it->t1 += r.t1;
    it->t2 += r.t2;
    it->grad_evals += r.grad_evals;
    if (r.approx_kl) {
      *it->approx_kl += *r.approx_kl;
      ++kl_counts[k];
    }
  }
  for (std::size_t k = 0; k < out.size(); ++k) {
    const real n = counts[k];
    ResultRow& m = out[k];
    m.c = static_cast<std::size_t>(std::llround(static_cast<real>(m.c) / n));
    m.rho /= n;
    m.test_error_or_mse /= n;
    m.t1 /= n;
    m.t2 /= n;
    m.grad_evals = static_cast<std::uint64_t>(std::llround(static_cast<real>(m.grad_evals) / n));
    if (kl_counts[k] == counts[k]) *m.approx_kl /= n;
    else m.approx_kl.reset();
  }
  return out;
}

ReportFormat parse_report_format(const std::string& name) {
  if (name == "csv") return ReportFormat::csv;
  if (name == "json") return ReportFormat::json;
  if (name == "table") return ReportFormat::table;
  throw ConfigError("report format must be csv, json or table");
}

namespace {

const std::vector<std::string> kColumns{"method", "trial", "dataset", "N",  "c",  "delta",
                                        "rho",    "approx_kl", "test_error_or_mse", "t1", "t2", "grad_evals"};

std::vector<std::string> cells(const ResultRow& r) {
  return {r.method,
          std::to_string(r.trial),
          r.dataset,
          std::to_string(r.N),
          std::to_string(r.c),
          format_real(r.delta),
          format_real(r.rho),
          r.approx_kl ? format_real(*r.approx_kl) : "n/a",
          format_real(r.test_error_or_mse),
          format_real(r.t1),
          format_real(r.t2),
          std::to_string(r.grad_evals)};
}

std::string short_real(real v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

std::vector<std::string> split_csv_line(const std::string& line, std::size_t lineno) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        cur += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += ch;
    }
  }
  if (quoted) throw ParseError(lineno, "unterminated quote");
  out.push_back(std::move(cur));
  return out;
}

nlohmann::json to_json(const ResultRow& r) {
  nlohmann::json j;
  j["method"] = r.method;
  j["trial"] = r.trial;
  j["dataset"] = r.dataset;
  j["N"] = r.N;
  j["c"] = r.c;
  j["delta"] = r.delta;
  j["rho"] = r.rho;
  j["approx_kl"] = r.approx_kl ? nlohmann::json(*r.approx_kl) : nlohmann::json(nullptr);
  j["test_error_or_mse"] = r.test_error_or_mse;
  j["t1"] = r.t1;
  j["t2"] = r.t2;
  j["grad_evals"] = r.grad_evals;
  return j;
}

}  // namespace

std::string report(const std::vector<ResultRow>& rows, ReportFormat format) {
  std::ostringstream out;
  switch (format) {
    case ReportFormat::csv: {
      for (std::size_t i = 0; i < kColumns.size(); ++i) out << (i ? "," : "") << kColumns[i];
      out << '\n';
      for (const ResultRow& r : rows) {
        const auto cs = cells(r);
        for (std::size_t i = 0; i < cs.size(); ++i) out << (i ? "," : "") << csv_escape(cs[i]);
        out << '\n';
      }
      break;
    }
    case ReportFormat::json: {
      nlohmann::json arr = nlohmann::json::array();
      for (const ResultRow& r : rows) arr.push_back(to_json(r));
      out << arr.dump(2) << '\n';
      break;
    }
    case ReportFormat::table: {
      std::vector<std::vector<std::string>> table{kColumns};
      for (const ResultRow& r : rows) {
        table.push_back({r.method, r.trial < 0 ? "mean" : std::to_string(r.trial), r.dataset, std::to_string(r.N),
                         std::to_string(r.c), short_real(r.delta), short_real(100 * r.rho) + "%",
                         r.approx_kl ? short_real(*r.approx_kl) : "n/a", short_real(r.test_error_or_mse),
                         short_real(r.t1), short_real(r.t2), std::to_string(r.grad_evals)});
      }
      std::vector<std::size_t> width(kColumns.size(), 0);
      for (const auto& row : table)
        for (std::size_t i = 0; i < row.size(); ++i) width[i] = std::max(width[i], row[i].size());
      for (const auto& row : table) {
        for (std::size_t i = 0; i < row.size(); ++i) {
          if (i) out << "  ";
          if (i < 3) out << std::left;
          else out << std::right;
          out << std::setw(static_cast<int>(width[i])) << row[i];
        }
        out << '\n';
      }
      break;
    }
  }
  return out.str();
}

std::vector<ResultRow> parse_csv_report(std::istream& in) {
  std::string line;
  std::size_t lineno = 1;
  if (!std::getline(in, line) || split_csv_line(line, lineno) != kColumns) throw ParseError(lineno, "unexpected header");
  std::vector<ResultRow> rows;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = split_csv_line(line, lineno);
    if (f.size() != kColumns.size()) throw ParseError(lineno, "wrong number of fields");
    try {
      ResultRow r;
      r.method = f[0];
      r.trial = static_cast<int>(to_int("trial", f[1]));
      r.dataset = f[2];
      r.N = static_cast<std::size_t>(to_int("N", f[3]));
      r.c = static_cast<std::size_t>(to_int("c", f[4]));
      r.delta = to_real("delta", f[5]);
      r.rho = to_real("rho", f[6]);
      if (f[7] != "n/a") r.approx_kl = to_real("approx_kl", f[7]);
      r.test_error_or_mse = to_real("test_error_or_mse", f[8]);
      r.t1 = to_real("t1", f[9]);
      r.t2 = to_real("t2", f[10]);
      r.grad_evals = static_cast<std::uint64_t>(to_int("grad_evals", f[11]));
      rows.push_back(std::move(r));
    } catch (const ConfigError& e) {
      throw ParseError(lineno, e.what());
    }
  }
  return rows;
}

std::vector<ResultRow> parse_json_report(const std::string& text) {
  nlohmann::json arr;
  try {
    arr = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed JSON report: ") + e.what());
  }
  if (!arr.is_array()) throw DataError("JSON report must be an array");
  std::vector<ResultRow> rows;
  try {
    for (const auto& j : arr) {
      ResultRow r;
      r.method = j.at("method").get<std::string>();
      r.trial = j.at("trial").get<int>();
      r.dataset = j.at("dataset").get<std::string>();
      r.N = j.at("N").get<std::size_t>();
      r.c = j.at("c").get<std::size_t>();
      r.delta = j.at("delta").get<real>();
      r.rho = j.at("rho").get<real>();
      if (!j.at("approx_kl").is_null()) r.approx_kl = j.at("approx_kl").get<real>();
      r.test_error_or_mse = j.at("test_error_or_mse").get<real>();
      r.t1 = j.at("t1").get<real>();
      r.t2 = j.at("t2").get<real>();
      r.grad_evals = j.at("grad_evals").get<std::uint64_t>();
      rows.push_back(std::move(r));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed JSON report row: ") + e.what());
  }
  return rows;
}

}  // namespace clusterpost
