#pragma once

// Observed data: an m x n matrix of states over an alphabet of size ell,
// with FASTA and PHYLIP-like ("m n" header) readers and writers.

#include <cctype>
#include <cstdint>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "stdr/error.hpp"
#include "stdr/trees.hpp"

namespace stdr {

/// State symbols: ACGT for ell = 4, otherwise 0-9 then a-z.
inline std::string alphabet_symbols(int ell) {
  if (ell < 2 || ell > 36) throw Error(ErrorKind::usage, "alphabet size must be in [2,36]");
  if (ell == 4) return "ACGT";
  return std::string("0123456789abcdefghijklmnopqrstuvwxyz").substr(0, ell);
}

class Alignment {
 public:
  Alignment() = default;
  Alignment(std::vector<std::string> labels, int ell, std::size_t n)
      : labels_(std::move(labels)), ell_(ell), n_(n), data_(labels_.size() * n, 0) {
    alphabet_symbols(ell);
    std::unordered_map<std::string, std::size_t> seen;
    for (std::size_t i = 0; i < labels_.size(); ++i) {
      if (!is_valid_label(labels_[i]))
        throw Error(ErrorKind::input_format, "invalid sequence label '" + labels_[i] + "'");
      if (!seen.emplace(labels_[i], i).second)
        throw Error(ErrorKind::input_format, "duplicate sequence label '" + labels_[i] + "'");
    }
  }

  std::size_t rows() const { return labels_.size(); }
  std::size_t cols() const { return n_; }
  int ell() const { return ell_; }
  const std::vector<std::string>& labels() const { return labels_; }

  std::uint8_t operator()(std::size_t i, std::size_t j) const { return data_[i * n_ + j]; }
  std::uint8_t& operator()(std::size_t i, std::size_t j) { return data_[i * n_ + j]; }
  const std::uint8_t* row(std::size_t i) const { return data_.data() + i * n_; }

  std::size_t index_of(const std::string& label) const {
    for (std::size_t i = 0; i < labels_.size(); ++i)
      if (labels_[i] == label) return i;
    throw Error(ErrorKind::usage, "unknown sequence label '" + label + "'");
  }

  /// Rows for the given labels, in the given order.
  Alignment subset(const std::vector<std::string>& keep) const {
    Alignment out(keep, ell_, n_);
    for (std::size_t r = 0; r < keep.size(); ++r) {
      std::size_t i = index_of(keep[r]);
      std::copy(row(i), row(i) + n_, out.data_.begin() + r * n_);
    }
    return out;
  }

 private:
  std::vector<std::string> labels_;
  int ell_ = 4;
  std::size_t n_ = 0;
  std::vector<std::uint8_t> data_;
};

namespace detail {

inline std::vector<std::uint8_t> decode(const std::string& seq, int ell, const std::string& label) {
  const std::string sym = alphabet_symbols(ell);
  int table[256];
  std::fill(std::begin(table), std::end(table), -1);
  for (int k = 0; k < ell; ++k) {
    table[static_cast<unsigned char>(sym[k])] = k;
    table[static_cast<unsigned char>(std::tolower(static_cast<unsigned char>(sym[k])))] = k;
    table[static_cast<unsigned char>(std::toupper(static_cast<unsigned char>(sym[k])))] = k;
  }
  std::vector<std::uint8_t> out;
  out.reserve(seq.size());
  for (char c : seq) {
    int v = table[static_cast<unsigned char>(c)];
    if (v < 0)
      throw Error(ErrorKind::input_format, std::string("symbol '") + c +
                                                "' outside the alphabet in sequence '" + label + "'");
    out.push_back(static_cast<std::uint8_t>(v));
  }
  return out;
}

inline Alignment assemble(const std::vector<std::string>& labels,
                          const std::vector<std::string>& seqs, int ell) {
  if (labels.empty()) throw Error(ErrorKind::input_format, "alignment has no sequences");
  const std::size_t n = seqs.front().size();
  if (n == 0) throw Error(ErrorKind::input_format, "alignment has empty sequences");
  Alignment a(labels, ell, n);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (seqs[i].size() != n)
      throw Error(ErrorKind::input_format, "sequence '" + labels[i] + "' has length " +
                                               std::to_string(seqs[i].size()) + ", expected " +
                                               std::to_string(n));
    auto row = decode(seqs[i], ell, labels[i]);
    for (std::size_t j = 0; j < n; ++j) a(i, j) = row[j];
  }
  return a;
}

}  // namespace detail

inline Alignment read_fasta(std::istream& is, int ell = 4) {
  std::vector<std::string> labels, seqs;
  std::string line;
  while (std::getline(is, line)) {
    while (!line.empty() && std::isspace(static_cast<unsigned char>(line.back()))) line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '>') {
      std::string label = line.substr(1);
      auto ws = label.find_first_of(" \t");
      if (ws != std::string::npos) label.resize(ws);
      labels.push_back(label);
      seqs.emplace_back();
    } else {
      if (labels.empty()) throw Error(ErrorKind::input_format, "FASTA data before first header");
      for (char c : line)
        if (!std::isspace(static_cast<unsigned char>(c))) seqs.back().push_back(c);
    }
  }
  return detail::assemble(labels, seqs, ell);
}

inline void write_fasta(std::ostream& os, const Alignment& a) {
  const std::string sym = alphabet_symbols(a.ell());
  std::string buf(a.cols(), ' ');
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) buf[j] = sym[a(i, j)];
    os << '>' << a.labels()[i] << '\n' << buf << '\n';
  }
}

inline Alignment read_phylip(std::istream& is, int ell = 4) {
  std::size_t m = 0, n = 0;
  if (!(is >> m >> n)) throw Error(ErrorKind::input_format, "PHYLIP header must be 'm n'");
  std::vector<std::string> labels(m), seqs(m);
  for (std::size_t i = 0; i < m; ++i)
    if (!(is >> labels[i] >> seqs[i]))
      throw Error(ErrorKind::input_format, "PHYLIP: expected " + std::to_string(m) + " rows");
  Alignment a = detail::assemble(labels, seqs, ell);
  if (a.cols() != n) throw Error(ErrorKind::input_format, "PHYLIP: header length mismatch");
  return a;
}

inline void write_phylip(std::ostream& os, const Alignment& a) {
  const std::string sym = alphabet_symbols(a.ell());
  os << a.rows() << ' ' << a.cols() << '\n';
  std::string buf(a.cols(), ' ');
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) buf[j] = sym[a(i, j)];
    os << a.labels()[i] << ' ' << buf << '\n';
  }
}

}  // namespace stdr
