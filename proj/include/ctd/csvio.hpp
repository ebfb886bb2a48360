#ifndef CTD_CSVIO_HPP
#define CTD_CSVIO_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

namespace ctd {

// Every emitted CSV starts with a single metadata comment line:
//   # ctdlab <version> config=<hash> seed=<n>
// No timestamps or hostnames, so identical runs produce identical bytes.
std::string meta_line(const std::string& config_hash, std::uint64_t seed);

// FNV-1a over the canonical JSON dump of a config, hex string.
std::string fnv1a_hex(const std::string& text);

// Shortest-round-trip float formatting ("%.17g") used for all CSV numbers.
std::string fmt_double(double v);

class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::string& meta,
            const std::vector<std::string>& header);
  void row(const std::vector<double>& values);
  void row_mixed(const std::vector<std::string>& cells);
  ~CsvWriter();

 private:
  std::ofstream out_;
  std::size_t n_cols_;
};

struct CsvTable {
  std::string meta;
  std::vector<std::string> header;
  Eigen::MatrixXd values;  // numeric cells only; parse errors throw
};

CsvTable read_csv(const std::string& path);

}  // namespace ctd

#endif
