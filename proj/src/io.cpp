#include "amortis/io.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace amortis::io {

std::string format_g17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return std::string(buf);
}

std::string matrix_to_csv(const Matrix& m) {
  std::string out;
  out.reserve(m.rows * m.cols * 12);
  for (std::size_t r = 0; r < m.rows; ++r) {
    for (std::size_t c = 0; c < m.cols; ++c) {
      if (c) out.push_back(',');
      out += format_g17(m(r, c));
    }
    out.push_back('\n');
  }
  return out;
}

Matrix csv_to_matrix(const std::string& text) {
  std::vector<Vec> rows;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string::npos) eol = text.size();
    if (eol > pos) {
      Vec row;
      const char* p = text.data() + pos;
      const char* end = text.data() + eol;
      while (p < end) {
        char* next = nullptr;
        const double v = std::strtod(p, &next);
        if (next == p) fail("csv_to_matrix: unparsable value");
        row.push_back(v);
        p = next;
        if (p < end) {
          if (*p != ',') fail("csv_to_matrix: expected comma");
          ++p;
        }
      }
      if (!rows.empty() && row.size() != rows.front().size())
        fail("csv_to_matrix: ragged rows");
      rows.push_back(std::move(row));
    }
    pos = eol + 1;
  }
  if (rows.empty()) fail("csv_to_matrix: empty input");
  Matrix m(rows.size(), rows.front().size());
  for (std::size_t r = 0; r < m.rows; ++r)
    for (std::size_t c = 0; c < m.cols; ++c) m(r, c) = rows[r][c];
  return m;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) fail("write_file: cannot open " + path);
  os.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!os) fail("write_file: write failed for " + path);
}

std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail("read_file: cannot open " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

bool file_exists(const std::string& path) { return std::filesystem::exists(path); }

void ensure_dir(const std::string& path) {
  std::error_code ec;
  std::filesystem::create_directories(path, ec);
  if (ec) fail("ensure_dir: cannot create " + path + ": " + ec.message());
}

}  // namespace amortis::io
