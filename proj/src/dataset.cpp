#include "clusterpost/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace clusterpost {

namespace {

bool parse_real(std::string_view token, real& out) {
  if (!token.empty() && token.front() == '+') token.remove_prefix(1);
  const char* end = token.data() + token.size();
  auto [ptr, ec] = std::from_chars(token.data(), end, out);
  return ec == std::errc() && ptr == end;
}

bool parse_index(std::string_view token, long long& out) {
  const char* end = token.data() + token.size();
  auto [ptr, ec] = std::from_chars(token.data(), end, out);
  return ec == std::errc() && ptr == end;
}

std::vector<std::string_view> tokenize(std::string_view line) {
  std::vector<std::string_view> tokens;
  std::size_t pos = 0;
  while (pos < line.size()) {
    while (pos < line.size() && std::isspace(static_cast<unsigned char>(line[pos]))) ++pos;
    std::size_t start = pos;
    while (pos < line.size() && !std::isspace(static_cast<unsigned char>(line[pos]))) ++pos;
    if (pos > start) tokens.push_back(line.substr(start, pos - start));
  }
  return tokens;
}

std::string format_real(real v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

Dataset parse_libsvm(std::istream& in, const ParseOptions& options) {
  Dataset ds;
  ds.mode = options.mode;
  ds.class_values = options.class_values;

  struct Raw {
    std::vector<std::pair<long long, real>> entries;
    int class_id = -1;
    real target = 0;
  };
  std::vector<Raw> raw;
  long long max_index = 0;

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view(line);
    if (auto hash = view.find('#'); hash != std::string_view::npos) view = view.substr(0, hash);
    auto tokens = tokenize(view);
    if (tokens.empty()) continue;

    Raw r;
    real label = 0;
    if (!parse_real(tokens[0], label) || !std::isfinite(label))
      throw ParseError(line_no, "malformed label '" + std::string(tokens[0]) + "'");
    if (ds.mode == TaskMode::classification) {
      auto it = std::find(ds.class_values.begin(), ds.class_values.end(), label);
      if (it == ds.class_values.end()) {
        ds.class_values.push_back(label);
        it = ds.class_values.end() - 1;
      }
      r.class_id = static_cast<int>(it - ds.class_values.begin());
    } else {
      r.target = label;
    }

    long long previous = 0;
    for (std::size_t t = 1; t < tokens.size(); ++t) {
      auto tok = tokens[t];
      auto colon = tok.find(':');
      if (colon == std::string_view::npos)
        throw ParseError(line_no, "expected <index>:<value>, got '" + std::string(tok) + "'");
      long long idx = 0;
      real val = 0;
      if (!parse_index(tok.substr(0, colon), idx) || idx < 1)
        throw ParseError(line_no, "bad feature index in '" + std::string(tok) + "'");
      if (!parse_real(tok.substr(colon + 1), val) || !std::isfinite(val))
        throw ParseError(line_no, "bad feature value in '" + std::string(tok) + "'");
      if (idx <= previous) throw ParseError(line_no, "non-ascending feature index " + std::to_string(idx));
      if (options.dim && idx > *options.dim)
        throw ParseError(line_no, "feature index " + std::to_string(idx) + " exceeds dim " +
                                      std::to_string(*options.dim));
      previous = idx;
      max_index = std::max(max_index, idx);
      r.entries.emplace_back(idx - 1, val);
    }
    raw.push_back(std::move(r));
  }
  if (raw.empty()) throw DataError("empty dataset");

  ds.dim = options.dim ? *options.dim : static_cast<Index>(max_index);
  if (ds.dim < 1) ds.dim = 1;
  ds.examples.reserve(raw.size());
  for (auto& r : raw) {
    LabeledExample ex;
    ex.features.resize(ds.dim);
    ex.features.reserve(static_cast<Index>(r.entries.size()));
    for (auto [i, v] : r.entries) ex.features.insertBack(static_cast<Index>(i)) = v;
    ex.class_id = r.class_id;
    ex.target = r.target;
    ds.examples.push_back(std::move(ex));
  }
  return ds;
}

Dataset parse_libsvm(std::string_view text, const ParseOptions& options) {
  std::istringstream in{std::string(text)};
  return parse_libsvm(in, options);
}

Dataset read_libsvm(const std::filesystem::path& path, const ParseOptions& options) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return parse_libsvm(in, options);
}

std::pair<Dataset, Dataset> read_libsvm_pair(const std::filesystem::path& train,
                                             const std::filesystem::path& test,
                                             const ParseOptions& options) {
  Dataset a = read_libsvm(train, options);
  ParseOptions test_options = options;
  test_options.class_values = a.class_values;
  Dataset b = read_libsvm(test, test_options);
  if (!options.dim) {
    Index dim = std::max(a.dim, b.dim);
    for (Dataset* ds : {&a, &b}) {
      ds->dim = dim;
      for (auto& ex : ds->examples) ex.features.conservativeResize(dim);
    }
  }
  // Classes first seen in the test file extend the training map.
  a.class_values = b.class_values;
  return {std::move(a), std::move(b)};
}

std::string to_libsvm(const Dataset& ds) {
  std::string out;
  for (const auto& ex : ds.examples) {
    out += format_real(ds.mode == TaskMode::classification ? ds.class_values.at(ex.class_id) : ex.target);
    for (FeatureVector::InnerIterator it(ex.features); it; ++it) {
      out += ' ';
      out += std::to_string(it.index() + 1);
      out += ':';
      out += format_real(it.value());
    }
    out += '\n';
  }
  return out;
}

real max_norm(const Dataset& ds) {
  real r = 0;
  for (const auto& ex : ds.examples) r = std::max(r, ex.features.norm());
  return r;
}

Dataset scale_features(const Dataset& ds, real R) {
  if (!(R > 0) || !std::isfinite(R)) throw DataError("normalization constant must be positive");
  Dataset out = ds;
  for (auto& ex : out.examples) ex.features /= R;
  out.norm_constant = ds.norm_constant * R;
  return out;
}

Dataset normalize(const Dataset& ds) {
  if (ds.empty()) throw DataError("cannot normalize an empty dataset");
  const real R = max_norm(ds);
  if (R == 0) throw DataError("degenerate dataset: every feature vector is zero");
  return scale_features(ds, R);
}

std::pair<Dataset, Dataset> split(const Dataset& ds, real test_fraction, std::uint64_t seed) {
  if (ds.empty()) throw DataError("cannot split an empty dataset");
  if (!(test_fraction > 0 && test_fraction < 1)) throw ConfigError("test fraction must lie in (0, 1)");
  const std::size_t n = ds.size();
  // Tolerance keeps products like 0.8 * 10 from rounding up to 9.
  auto n_train = static_cast<std::size_t>(std::ceil((1.0 - test_fraction) * static_cast<real>(n) - 1e-9));
  n_train = std::clamp<std::size_t>(n_train, 0, n);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  Dataset train = ds, test = ds;
  train.examples.clear();
  test.examples.clear();
  for (std::size_t i = 0; i < n; ++i)
    (i < n_train ? train : test).examples.push_back(ds.examples[order[i]]);
  return {std::move(train), std::move(test)};
}

mat feature_matrix(const Dataset& ds) {
  mat X = mat::Zero(ds.dim, static_cast<Index>(ds.size()));
  for (std::size_t i = 0; i < ds.size(); ++i)
    for (FeatureVector::InnerIterator it(ds.examples[i].features); it; ++it)
      X(it.index(), static_cast<Index>(i)) = it.value();
  return X;
}

vec targets(const Dataset& ds) {
  vec y(static_cast<Index>(ds.size()));
  for (std::size_t i = 0; i < ds.size(); ++i) y(static_cast<Index>(i)) = ds.examples[i].target;
  return y;
}

std::vector<int> class_ids(const Dataset& ds) {
  std::vector<int> ids;
  ids.reserve(ds.size());
  for (const auto& ex : ds.examples) ids.push_back(ex.class_id);
  return ids;
}

}  // namespace clusterpost
