#include "carp/huffman.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <string>
#include <tuple>

#include "carp/error.hpp"

namespace carp {

std::uint64_t symbol_wire_id(Symbol s) {
  if (s == kZeroRun) return 0;
  const auto u = static_cast<std::uint64_t>(s);
  return ((u << 1) ^ static_cast<std::uint64_t>(s >> 63)) + 1;
}

Symbol symbol_from_wire_id(std::uint64_t id) {
  if (id == 0) return kZeroRun;
  const std::uint64_t z = id - 1;
  return static_cast<Symbol>((z >> 1) ^ (~(z & 1) + 1));
}

CodeTable::CodeTable(std::vector<Entry> entries) : entries_(std::move(entries)) {
  if (entries_.empty()) throw StreamError("empty code table");
  std::sort(entries_.begin(), entries_.end(), [](const Entry& a, const Entry& b) {
    return std::make_tuple(a.length, symbol_wire_id(a.symbol)) < std::make_tuple(b.length, symbol_wire_id(b.symbol));
  });
  const int max_len = entries_.back().length;
  if (entries_.front().length < 1 || max_len > 64) throw StreamError("code length outside [1, 64]");

  first_code_.assign(max_len + 2, 0);
  first_entry_.assign(max_len + 2, 0);
  count_.assign(max_len + 2, 0);
  for (const Entry& e : entries_) ++count_[e.length];

  // Kraft check with exact integer accounting of the remaining code space.
  unsigned __int128 space = 1;
  std::uint64_t code = 0;
  std::size_t index = 0;
  for (int len = 1; len <= max_len; ++len) {
    space <<= 1;
    if (count_[len] > space) throw StreamError("code lengths violate the Kraft inequality");
    space -= count_[len];
    first_code_[len] = code;
    first_entry_[len] = index;
    for (std::size_t i = 0; i < count_[len]; ++i) {
      const Entry& e = entries_[index++];
      if (!codes_.emplace(e.symbol, Code{code + i, len}).second) throw StreamError("duplicate symbol in code table");
    }
    code = (code + count_[len]) << 1;
  }
}

int CodeTable::length_of(Symbol s) const {
  const auto it = codes_.find(s);
  return it == codes_.end() ? 0 : it->second.length;
}

void CodeTable::encode(Symbol s, BitWriter& out) const {
  const auto it = codes_.find(s);
  if (it == codes_.end()) throw StreamError("symbol " + std::to_string(s) + " missing from code table");
  out.put_bits(it->second.bits, it->second.length);
}

Symbol CodeTable::decode(BitReader& in) const {
  std::uint64_t code = 0;
  const int max_len = static_cast<int>(count_.size()) - 2;
  for (int len = 1; len <= max_len; ++len) {
    code = (code << 1) | static_cast<std::uint64_t>(in.get_bit());
    const std::uint64_t delta = code - first_code_[len];
    if (code >= first_code_[len] && delta < count_[len]) return entries_[first_entry_[len] + delta].symbol;
  }
  throw StreamError("invalid prefix code");
}

double CodeTable::kraft_sum() const {
  double sum = 0.0;
  for (const Entry& e : entries_) sum += std::ldexp(1.0, -e.length);
  return sum;
}

void CodeTable::write(ByteWriter& out) const {
  out.varint(entries_.size());
  for (const Entry& e : entries_) {
    out.varint(symbol_wire_id(e.symbol));
    out.u8(static_cast<std::uint8_t>(e.length));
  }
}

CodeTable CodeTable::read(ByteReader& in) {
  const std::uint64_t count = in.varint();
  if (count == 0 || count > in.remaining()) throw StreamError("bad code table size");
  std::vector<Entry> entries;
  entries.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    const Symbol s = symbol_from_wire_id(in.varint());
    entries.push_back({s, in.u8()});
  }
  return CodeTable(std::move(entries));
}

CodeTable huffman_build(const Histogram& histogram) {
  if (histogram.empty()) throw ContractViolation("Huffman code needs at least one symbol");
  if (histogram.size() == 1) return CodeTable({{histogram.begin()->first, 1}});

  // Leaves first in wire-id order, then internal nodes in creation order;
  // ties in weight go to the lower node id so lengths are deterministic.
  std::vector<Symbol> leaves;
  for (const auto& [s, f] : histogram) leaves.push_back(s);
  std::sort(leaves.begin(), leaves.end(),
            [](Symbol a, Symbol b) { return symbol_wire_id(a) < symbol_wire_id(b); });
  const std::size_t n = leaves.size();
  std::vector<std::size_t> parent(2 * n - 1, 0);
  using Item = std::pair<std::uint64_t, std::size_t>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
  for (std::size_t i = 0; i < n; ++i) heap.push({std::max<std::uint64_t>(histogram.at(leaves[i]), 1), i});
  std::size_t next = n;
  while (heap.size() > 1) {
    const Item a = heap.top();
    heap.pop();
    const Item b = heap.top();
    heap.pop();
    parent[a.second] = next;
    parent[b.second] = next;
    heap.push({a.first + b.first, next++});
  }
  // Parents always have larger ids, so depths resolve from the root down.
  std::vector<int> depth(2 * n - 1, 0);
  for (std::size_t i = 2 * n - 1; i-- > 0;)
    if (i != 2 * n - 2) depth[i] = depth[parent[i]] + 1;
  std::vector<CodeTable::Entry> entries;
  for (std::size_t i = 0; i < n; ++i) entries.push_back({leaves[i], depth[i]});
  return CodeTable(std::move(entries));
}

BitString huffman_encode(std::span<const Symbol> symbols, const CodeTable& table) {
  BitWriter w;
  for (Symbol s : symbols) table.encode(s, w);
  BitString out;
  out.bit_count = w.bit_count();
  out.bytes = w.take();
  return out;
}

std::vector<Symbol> huffman_decode(const BitString& bits, const CodeTable& table, std::size_t count) {
  BitReader r(bits.bytes, bits.bit_count);
  std::vector<Symbol> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(table.decode(r));
  return out;
}

}  // namespace carp
