#include "ctd/csvio.hpp"

#include <cstdio>
#include <sstream>

#include "ctd/errors.hpp"
#include "ctd/version.hpp"

namespace ctd {

std::string meta_line(const std::string& config_hash, std::uint64_t seed) {
  std::ostringstream os;
  os << "# ctdlab " << kToolVersion << " config=" << config_hash
     << " seed=" << seed;
  return os.str();
}

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

CsvWriter::CsvWriter(const std::string& path, const std::string& meta,
                     const std::vector<std::string>& header)
    : out_(path), n_cols_(header.size()) {
  if (!out_) throw ConfigError("cannot open for writing: " + path);
  out_ << meta << "\n";
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (i) out_ << ",";
    out_ << header[i];
  }
  out_ << "\n";
}

void CsvWriter::row(const std::vector<double>& values) {
  if (values.size() != n_cols_)
    throw ConfigError("csv row width mismatch");
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out_ << ",";
    out_ << fmt_double(values[i]);
  }
  out_ << "\n";
}

void CsvWriter::row_mixed(const std::vector<std::string>& cells) {
  if (cells.size() != n_cols_)
    throw ConfigError("csv row width mismatch");
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) out_ << ",";
    out_ << cells[i];
  }
  out_ << "\n";
}

CsvWriter::~CsvWriter() { out_.flush(); }

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open: " + path);
  CsvTable table;
  std::string line;
  std::vector<std::vector<double>> rows;
  bool have_header = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (table.meta.empty()) table.meta = line;
      continue;
    }
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.push_back("");
    if (!have_header) {
      table.header = cells;
      have_header = true;
      continue;
    }
    if (cells.size() != table.header.size())
      throw ParseError(path + ": ragged csv row");
    std::vector<double> vals;
    vals.reserve(cells.size());
    for (const auto& c : cells) {
      try {
        std::size_t pos = 0;
        double v = std::stod(c, &pos);
        if (pos != c.size()) throw ParseError("");
        vals.push_back(v);
      } catch (...) {
        throw ParseError(path + ": non-numeric cell '" + c + "'");
      }
    }
    rows.push_back(std::move(vals));
  }
  if (!have_header) throw ParseError(path + ": missing header");
  table.values.resize(static_cast<long>(rows.size()),
                      static_cast<long>(table.header.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      table.values(static_cast<long>(i), static_cast<long>(j)) = rows[i][j];
  return table;
}

}  // namespace ctd
