#include "clusterpost/chain.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace clusterpost {

void write_chain_csv(std::ostream& out, const SampleChain& chain) {
  char buf[32];
  for (Index s = 0; s < chain.draws.cols(); ++s) {
    for (Index p = 0; p < chain.draws.rows(); ++p) {
      std::snprintf(buf, sizeof buf, "%.17g", chain.draws(p, s));
      if (p) out << ',';
      out << buf;
    }
    out << '\n';
  }
}

void write_chain_csv(const std::filesystem::path& path, const SampleChain& chain) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  write_chain_csv(out, chain);
}

SampleChain read_chain_csv(std::istream& in) {
  std::vector<real> values;
  Index width = -1, rows = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    Index fields = 0;
    std::size_t pos = 0;
    while (pos <= line.size()) {
      std::size_t comma = line.find(',', pos);
      if (comma == std::string::npos) comma = line.size();
      real v = 0;
      auto [ptr, ec] = std::from_chars(line.data() + pos, line.data() + comma, v);
      if (ec != std::errc() || ptr != line.data() + comma) throw ParseError(line_no, "bad chain value");
      values.push_back(v);
      ++fields;
      pos = comma + 1;
    }
    if (width >= 0 && fields != width) throw ParseError(line_no, "ragged chain row");
    width = fields;
    ++rows;
  }
  if (rows == 0) throw DataError("empty chain");
  SampleChain chain;
  chain.draws = Eigen::Map<const mat>(values.data(), width, rows);
  return chain;
}

SampleChain read_chain_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return read_chain_csv(in);
}

}  // namespace clusterpost
