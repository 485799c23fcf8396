#pragma once

// Matrix files: headerless CSV, or the "CPCA" binary layout
//   bytes 0-3   magic "CPCA"
//   bytes 4-7   rows, uint32 little-endian
//   bytes 8-11  cols, uint32 little-endian
//   then rows*cols IEEE-754 doubles, little-endian, row-major.

#include <array>
#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "cauchy_pca/errors.hpp"
#include "cauchy_pca/matrix.hpp"

namespace cpca {

enum class MatrixFormat { Csv, Binary };

inline constexpr std::array<char, 4> kBinaryMagic{'C', 'P', 'C', 'A'};

/// Shortest decimal text that parses back to the same double.
inline std::string format_number(double x) {
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  if (std::isnan(x)) return "nan";
  std::array<char, 32> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), x);
  return std::string(buf.data(), res.ptr);
}

/// ".bin" and ".cpca" select the binary layout; anything else is CSV.
inline MatrixFormat format_for_path(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  return (ext == ".bin" || ext == ".cpca") ? MatrixFormat::Binary : MatrixFormat::Csv;
}

inline void write_matrix_csv(std::ostream& os, const DenseMatrix& a) {
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) {
      if (j) os << ',';
      os << format_number(a(i, j));
    }
    os << '\n';
  }
}

inline DenseMatrix read_matrix_csv(std::istream& is) {
  std::vector<double> values;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::size_t count = 0;
    std::string_view rest(line);
    while (true) {
      const auto comma = rest.find(',');
      auto field = rest.substr(0, comma);
      while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
      while (!field.empty() && (field.back() == ' ' || field.back() == '\t')) field.remove_suffix(1);
      double x = 0.0;
      const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), x);
      if (ec != std::errc() || ptr != field.data() + field.size() || field.empty()) {
        throw IngestionError("csv matrix: bad number '" + std::string(field) + "' on row " +
                             std::to_string(rows + 1));
      }
      values.push_back(x);
      ++count;
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (rows == 0) {
      cols = count;
    } else if (count != cols) {
      throw IngestionError("csv matrix: row " + std::to_string(rows + 1) + " has " + std::to_string(count) +
                           " fields, expected " + std::to_string(cols));
    }
    ++rows;
  }
  if (rows == 0) throw IngestionError("csv matrix: no data");
  try {
    return DenseMatrix(rows, cols, values);
  } catch (const std::invalid_argument& e) {
    throw IngestionError(std::string("csv matrix: ") + e.what());
  }
}

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  const std::array<char, 4> b{static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                              static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  os.write(b.data(), 4);
}

inline std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace detail

inline void write_matrix_binary(std::ostream& os, const DenseMatrix& a) {
  constexpr auto kMax = std::numeric_limits<std::uint32_t>::max();
  if (a.rows() > kMax || a.cols() > kMax) throw std::invalid_argument("binary matrix: dimension exceeds uint32");
  os.write(kBinaryMagic.data(), 4);
  detail::put_u32(os, static_cast<std::uint32_t>(a.rows()));
  detail::put_u32(os, static_cast<std::uint32_t>(a.cols()));
  for (double x : a.entries()) {
    const auto bits = std::bit_cast<std::uint64_t>(x);
    std::array<char, 8> b{};
    for (int i = 0; i < 8; ++i) b[static_cast<std::size_t>(i)] = static_cast<char>((bits >> (8 * i)) & 0xff);
    os.write(b.data(), 8);
  }
}

inline DenseMatrix read_matrix_binary(std::istream& is) {
  const std::vector<unsigned char> bytes{std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kBinaryMagic.data(), 4) != 0) {
    throw IngestionError("binary matrix: missing CPCA header");
  }
  const std::size_t rows = detail::get_u32(bytes.data() + 4);
  const std::size_t cols = detail::get_u32(bytes.data() + 8);
  if (rows == 0 || cols == 0) throw IngestionError("binary matrix: zero dimension");
  if (bytes.size() != 12 + 8 * rows * cols) {
    throw IngestionError("binary matrix: payload is " + std::to_string(bytes.size() - 12) + " bytes, expected " +
                         std::to_string(8 * rows * cols));
  }
  std::vector<double> values(rows * cols);
  for (std::size_t k = 0; k < values.size(); ++k) {
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes[12 + 8 * k + static_cast<std::size_t>(i)]) << (8 * i);
    values[k] = std::bit_cast<double>(bits);
  }
  try {
    return DenseMatrix(rows, cols, values);
  } catch (const std::invalid_argument& e) {
    throw IngestionError(std::string("binary matrix: ") + e.what());
  }
}

/// Reads either format; binary is recognised by its magic bytes.
inline DenseMatrix read_matrix(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("cannot open " + path.string());
  std::array<char, 4> head{};
  in.read(head.data(), 4);
  const bool binary = in.gcount() == 4 && head == kBinaryMagic;
  in.clear();
  in.seekg(0);
  return binary ? read_matrix_binary(in) : read_matrix_csv(in);
}

inline void write_matrix(const std::filesystem::path& path, const DenseMatrix& a) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IngestionError("cannot write " + path.string());
  if (format_for_path(path) == MatrixFormat::Binary) {
    write_matrix_binary(out, a);
  } else {
    write_matrix_csv(out, a);
  }
  if (!out) throw IngestionError("write failed for " + path.string());
}

}  // namespace cpca
