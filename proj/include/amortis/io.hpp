#pragma once
// Small file helpers shared by dataset and experiment I/O: full-precision CSV
// for matrices, whole-file read/write, and directory creation.

#include <string>

#include "amortis/common.hpp"

namespace amortis::io {

// Shortest text form that round-trips a double exactly.
std::string format_g17(double x);

std::string matrix_to_csv(const Matrix& m);
Matrix csv_to_matrix(const std::string& text);

void write_file(const std::string& path, const std::string& content);
std::string read_file(const std::string& path);
bool file_exists(const std::string& path);
void ensure_dir(const std::string& path);

}  // namespace amortis::io
