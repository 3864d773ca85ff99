#pragma once

#include <array>
#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "bistoch/error.hpp"
#include "bistoch/flow_matrix.hpp"

namespace bistoch::io {

namespace detail {

// Splits one CSV record. Handles double-quoted fields with "" escapes.
inline std::vector<std::string> split_csv_line(std::string_view line,
                                               std::size_t line_no) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  bool was_quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      if (!cur.empty() || was_quoted)
        throw invalid_input("line " + std::to_string(line_no) +
                            ": stray quote in field");
      quoted = was_quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
      was_quoted = false;
    } else {
      cur.push_back(c);
    }
  }
  if (quoted)
    throw invalid_input("line " + std::to_string(line_no) +
                        ": unterminated quoted field");
  fields.push_back(std::move(cur));
  return fields;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

inline bool next_line(std::istream& in, std::string& line, std::size_t& line_no) {
  if (!std::getline(in, line)) return false;
  ++line_no;
  if (line_no == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return true;
}

inline double parse_double(std::string_view text, std::size_t line_no) {
  text = trim(text);
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size() || text.empty())
    throw invalid_input("line " + std::to_string(line_no) + ": '" +
                        std::string(text) + "' is not a number");
  return v;
}

inline std::string format_double(double v) {
  std::array<char, 32> buf{};
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

inline std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

inline std::ifstream open_in(const std::filesystem::path& path,
                             std::ios::openmode mode = std::ios::in) {
  std::ifstream in(path, mode);
  if (!in) throw invalid_input("cannot open '" + path.string() + "' for reading");
  return in;
}

inline std::ofstream open_out(const std::filesystem::path& path,
                              std::ios::openmode mode = std::ios::out) {
  std::ofstream out(path, mode | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  return out;
}

}  // namespace detail

// Flow CSV: header `origin,dest,flow`, one record per line.
inline std::vector<FlowRecord> read_flow_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  if (!detail::next_line(in, line, line_no))
    throw invalid_input("flow CSV: missing header");
  auto header = detail::split_csv_line(line, line_no);
  for (auto& h : header) h = std::string(detail::trim(h));
  if (header != std::vector<std::string>{"origin", "dest", "flow"})
    throw invalid_input("flow CSV: line 1: expected header 'origin,dest,flow'");

  std::vector<FlowRecord> records;
  while (detail::next_line(in, line, line_no)) {
    if (detail::trim(line).empty()) continue;
    auto f = detail::split_csv_line(line, line_no);
    if (f.size() != 3)
      throw invalid_input("flow CSV: line " + std::to_string(line_no) +
                          ": expected 3 fields, got " + std::to_string(f.size()));
    FlowRecord r;
    r.origin = std::string(detail::trim(f[0]));
    r.dest = std::string(detail::trim(f[1]));
    r.flow = detail::parse_double(f[2], line_no);
    r.line = line_no;
    records.push_back(std::move(r));
  }
  return records;
}

inline std::vector<FlowRecord> read_flow_csv(const std::filesystem::path& path) {
  auto in = detail::open_in(path);
  return read_flow_csv(in);
}

// Emits every non-zero cell as a record. Together with the label list this
// reproduces the matrix exactly through load_flows.
inline void write_flow_csv(const FlowMatrix& m, std::ostream& out) {
  out << "origin,dest,flow\n";
  for (std::size_t i = 0; i < m.size(); ++i)
    for (std::size_t j = 0; j < m.size(); ++j)
      if (m(i, j) != 0.0)
        out << detail::quote(m.label(i).code()) << ','
            << detail::quote(m.label(j).code()) << ','
            << detail::format_double(m(i, j)) << '\n';
}

// Label file: one code per line; order defines the matrix index.
inline std::vector<RegionId> read_labels(std::istream& in) {
  std::vector<RegionId> labels;
  std::set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (detail::next_line(in, line, line_no)) {
    const auto code = detail::trim(line);
    if (code.empty()) continue;
    if (!seen.emplace(code).second)
      throw invalid_input("label file: line " + std::to_string(line_no) +
                          ": duplicate code '" + std::string(code) + "'");
    labels.emplace_back(std::string(code));
  }
  if (labels.empty()) throw invalid_input("label file: no labels");
  return labels;
}

inline std::vector<RegionId> read_labels(const std::filesystem::path& path) {
  auto in = detail::open_in(path);
  return read_labels(in);
}

inline void write_labels(const std::vector<RegionId>& labels, std::ostream& out) {
  for (const auto& l : labels) out << l.code() << '\n';
}

// Dense CSV: a header row of n quoted labels, then n rows of n values.
inline void write_dense_csv(const FlowMatrix& m, std::ostream& out) {
  for (std::size_t i = 0; i < m.size(); ++i)
    out << (i ? "," : "") << detail::quote(m.label(i).code());
  out << '\n';
  for (std::size_t i = 0; i < m.size(); ++i) {
    for (std::size_t j = 0; j < m.size(); ++j)
      out << (j ? "," : "") << detail::format_double(m(i, j));
    out << '\n';
  }
}

inline FlowMatrix read_dense_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  if (!detail::next_line(in, line, line_no))
    throw invalid_input("dense CSV: empty file");
  std::vector<RegionId> labels;
  for (const auto& f : detail::split_csv_line(line, line_no))
    labels.emplace_back(std::string(detail::trim(f)));
  const std::size_t n = labels.size();
  std::vector<double> data;
  data.reserve(n * n);
  std::size_t rows = 0;
  while (detail::next_line(in, line, line_no)) {
    if (detail::trim(line).empty()) continue;
    auto f = detail::split_csv_line(line, line_no);
    if (f.size() != n)
      throw invalid_input("dense CSV: line " + std::to_string(line_no) +
                          ": expected " + std::to_string(n) + " values, got " +
                          std::to_string(f.size()));
    for (const auto& v : f) data.push_back(detail::parse_double(v, line_no));
    ++rows;
  }
  if (rows != n)
    throw invalid_input("dense CSV: matrix is not square (" + std::to_string(rows) +
                        " rows, " + std::to_string(n) + " labels)");
  return FlowMatrix(SquareMatrix(n, std::move(data)), std::move(labels));
}

inline constexpr std::array<char, 4> kBinaryMagic{'B', 'S', 'T', 'M'};

namespace detail {
inline void put_u64(std::ostream& out, std::uint64_t v) {
  std::array<char, 8> b{};
  for (int k = 0; k < 8; ++k) b[k] = static_cast<char>((v >> (8 * k)) & 0xFF);
  out.write(b.data(), 8);
}
inline void put_u32(std::ostream& out, std::uint32_t v) {
  std::array<char, 4> b{};
  for (int k = 0; k < 4; ++k) b[k] = static_cast<char>((v >> (8 * k)) & 0xFF);
  out.write(b.data(), 4);
}
template <typename U>
U get_le(std::istream& in) {
  std::array<unsigned char, sizeof(U)> b{};
  if (!in.read(reinterpret_cast<char*>(b.data()), sizeof(U)))
    throw invalid_input("binary matrix: truncated file");
  U v = 0;
  for (std::size_t k = 0; k < sizeof(U); ++k) v |= static_cast<U>(b[k]) << (8 * k);
  return v;
}
}  // namespace detail

// Binary: "BSTM", u64 n, n*n row-major IEEE-754 doubles, then n labels each
// as u32 byte length + UTF-8 bytes. All integers and doubles little-endian.
inline void write_binary(const FlowMatrix& m, std::ostream& out) {
  out.write(kBinaryMagic.data(), kBinaryMagic.size());
  detail::put_u64(out, m.size());
  for (double v : m.entries().data())
    detail::put_u64(out, std::bit_cast<std::uint64_t>(v));
  for (const auto& l : m.labels()) {
    detail::put_u32(out, static_cast<std::uint32_t>(l.code().size()));
    out.write(l.code().data(), static_cast<std::streamsize>(l.code().size()));
  }
}

inline FlowMatrix read_binary(std::istream& in) {
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), 4) || magic != kBinaryMagic)
    throw invalid_input("binary matrix: bad magic (expected BSTM)");
  const auto n = detail::get_le<std::uint64_t>(in);
  if (n == 0 || n > (1u << 20)) throw invalid_input("binary matrix: bad dimension");
  std::vector<double> data(n * n);
  for (auto& v : data) v = std::bit_cast<double>(detail::get_le<std::uint64_t>(in));
  std::vector<RegionId> labels;
  labels.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    const auto len = detail::get_le<std::uint32_t>(in);
    std::string code(len, '\0');
    if (!in.read(code.data(), len)) throw invalid_input("binary matrix: truncated labels");
    labels.emplace_back(std::move(code));
  }
  return FlowMatrix(SquareMatrix(n, std::move(data)), std::move(labels));
}

// Format is chosen by content on read (magic bytes) and by extension on write
// (".bstm" binary, anything else dense CSV).
inline FlowMatrix read_matrix(const std::filesystem::path& path) {
  auto in = detail::open_in(path, std::ios::in | std::ios::binary);
  std::array<char, 4> head{};
  in.read(head.data(), 4);
  const bool binary = in.gcount() == 4 && head == kBinaryMagic;
  in.clear();
  in.seekg(0);
  return binary ? read_binary(in) : read_dense_csv(in);
}

inline void write_matrix(const FlowMatrix& m, const std::filesystem::path& path) {
  auto out = detail::open_out(path, std::ios::out | std::ios::binary);
  if (path.extension() == ".bstm")
    write_binary(m, out);
  else
    write_dense_csv(m, out);
  if (!out) throw std::runtime_error("failed writing '" + path.string() + "'");
}

}  // namespace bistoch::io
