#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <unordered_map>
#include <vector>

#include "carp/bitio.hpp"

namespace carp {

using Symbol = std::int64_t;

// Escape token for a run of zero coefficients.
inline constexpr Symbol kZeroRun = std::numeric_limits<Symbol>::min();

// Stable identifier of a symbol in serialized tables and canonical order:
// 0 for kZeroRun, zigzag(value) + 1 otherwise.
std::uint64_t symbol_wire_id(Symbol s);
Symbol symbol_from_wire_id(std::uint64_t id);

struct BitString {
  std::vector<std::uint8_t> bytes;
  std::size_t bit_count = 0;

  friend bool operator==(const BitString&, const BitString&) = default;
};

// Canonical prefix code. Entries are sorted by (length, wire id); codes are
// assigned consecutively in that order.
class CodeTable {
 public:
  struct Entry {
    Symbol symbol;
    int length;
    friend bool operator==(const Entry&, const Entry&) = default;
  };

  CodeTable() = default;
  // Throws StreamError if the lengths violate the Kraft inequality or lie
  // outside [1, 64].
  explicit CodeTable(std::vector<Entry> entries);

  const std::vector<Entry>& entries() const { return entries_; }
  bool contains(Symbol s) const { return codes_.count(s) != 0; }
  int length_of(Symbol s) const;

  void encode(Symbol s, BitWriter& out) const;
  Symbol decode(BitReader& in) const;

  // Sum of 2^-length over entries.
  double kraft_sum() const;

  void write(ByteWriter& out) const;
  static CodeTable read(ByteReader& in);

  friend bool operator==(const CodeTable& a, const CodeTable& b) { return a.entries_ == b.entries_; }

 private:
  struct Code {
    std::uint64_t bits;
    int length;
  };

  std::vector<Entry> entries_;
  std::unordered_map<Symbol, Code> codes_;
  // Canonical decoding tables indexed by code length.
  std::vector<std::uint64_t> first_code_;
  std::vector<std::size_t> first_entry_;
  std::vector<std::size_t> count_;
};

using Histogram = std::map<Symbol, std::uint64_t>;

// Optimal code lengths by the Huffman algorithm, in canonical form. A lone
// symbol gets length 1. Zero counts are treated as 1.
CodeTable huffman_build(const Histogram& histogram);

BitString huffman_encode(std::span<const Symbol> symbols, const CodeTable& table);
std::vector<Symbol> huffman_decode(const BitString& bits, const CodeTable& table, std::size_t count);

}  // namespace carp
