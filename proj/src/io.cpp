#include "clusterpost/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace clusterpost {

namespace {

constexpr const char* kMagic = "# clusterpost clustering v1";

std::string format_real(real v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void write_clustering(std::ostream& out, const ClusteringResult& result) {
  out << kMagic << '\n';
  out << result.total_points << ' ' << result.dim << ' ' << result.num_clusters() << ' ' << format_real(result.delta)
      << ' ' << format_real(result.ratio()) << ' ' << format_real(result.target_scale) << '\n';
  for (const Cluster& c : result.clusters) {
    out << c.count << ' ' << format_real(c.radius) << ' ' << c.label;
    for (Index i = 0; i < c.centroid.size(); ++i) out << ' ' << format_real(c.centroid(i));
    out << '\n';
  }
}

void write_clustering(const std::filesystem::path& path, const ClusteringResult& result) {
  std::ostringstream out;
  write_clustering(out, result);
  write_file_atomic(path, out.str());
}

ClusteringResult read_clustering(std::istream& in) {
  std::string line;
  std::size_t lineno = 1;
  if (!std::getline(in, line) || line != kMagic) throw ParseError(lineno, "missing clustering header");
  ++lineno;
  if (!std::getline(in, line)) throw ParseError(lineno, "missing clustering summary");
  ClusteringResult r;
  std::size_t c = 0;
  real rho = 0;
  {
    std::istringstream s(line);
    if (!(s >> r.total_points >> r.dim >> c >> r.delta >> rho >> r.target_scale) || r.dim < 1)
      throw ParseError(lineno, "malformed clustering summary");
  }
  r.clusters.reserve(c);
  std::size_t total = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream s(line);
    Cluster cl;
    if (!(s >> cl.count >> cl.radius >> cl.label)) throw ParseError(lineno, "malformed cluster record");
    cl.centroid.resize(r.dim);
    for (Index i = 0; i < r.dim; ++i)
      if (!(s >> cl.centroid(i))) throw ParseError(lineno, "short centroid");
    std::string extra;
    if (s >> extra) throw ParseError(lineno, "trailing fields in cluster record");
    total += cl.count;
    r.clusters.push_back(std::move(cl));
  }
  if (r.clusters.size() != c) throw DataError("cluster count does not match the header");
  if (total != r.total_points) throw DataError("cluster multiplicities do not sum to N");
  return r;
}

ClusteringResult read_clustering(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return read_clustering(in);
}

void export_histogram(const ClusteringResult& result, const std::filesystem::path& path) {
  export_histogram(size_counts(result), path);
}

void export_histogram(const std::vector<std::pair<std::size_t, std::size_t>>& counts,
                      const std::filesystem::path& path) {
  std::ostringstream out;
  out << "cluster_size,count\n";
  for (auto [size, count] : counts) out << size << ',' << count << '\n';
  write_file_atomic(path, out.str());
}

std::vector<std::pair<std::size_t, std::size_t>> read_histogram(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  std::size_t lineno = 1;
  if (!std::getline(in, line) || line != "cluster_size,count") throw ParseError(lineno, "missing histogram header");
  std::vector<std::pair<std::size_t, std::size_t>> out;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::size_t size = 0, count = 0;
    char comma = 0;
    std::istringstream s(line);
    if (!(s >> size >> comma >> count) || comma != ',') throw ParseError(lineno, "malformed histogram row");
    out.emplace_back(size, count);
  }
  return out;
}

namespace {

std::string csv_line(const vec& v) {
  std::string out;
  for (Index i = 0; i < v.size(); ++i) out += (i ? "," : "") + format_real(v(i));
  return out + "\n";
}

vec parse_csv_line(const std::string& line, std::size_t lineno) {
  std::vector<real> values;
  std::istringstream s(line);
  std::string cell;
  while (std::getline(s, cell, ',')) {
    try {
      std::size_t used = 0;
      values.push_back(std::stod(cell, &used));
      if (used != cell.size()) throw std::invalid_argument(cell);
    } catch (const std::exception&) {
      throw ParseError(lineno, "not a number: " + cell);
    }
  }
  return Eigen::Map<const vec>(values.data(), static_cast<Index>(values.size()));
}

}  // namespace

void write_vb(const std::filesystem::path& path, const VbPosterior& q) {
  write_file_atomic(path, csv_line(q.mean) + csv_line(q.log_std));
}

VbPosterior read_vb(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::string a, b;
  if (!std::getline(in, a) || !std::getline(in, b)) throw ParseError(2, "expected mean and log_std lines");
  VbPosterior q{parse_csv_line(a, 1), parse_csv_line(b, 2)};
  if (q.mean.size() != q.log_std.size() || q.mean.size() == 0) throw DataError("mean and log_std lengths differ");
  return q;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out << contents;
    if (!out.flush()) throw DataError("cannot write " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw DataError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

}  // namespace clusterpost
