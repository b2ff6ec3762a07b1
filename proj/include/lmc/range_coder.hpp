// Copyright 2026 The lmcodec Authors
// SPDX-License-Identifier: Apache-2.0

// Range coder over integer symbols with static 16-bit cumulative tables.
//
// The coder keeps a 64-bit `low` and a 32-bit `range` and renormalizes a byte
// at a time once the range drops below 2^24 (the LZMA carry scheme). Streams
// are terminated with the shortest byte string that still identifies the
// final interval; the decoder treats missing trailing bytes as zeros.
//
// Symbols outside a table's alphabet go through its escape slot, followed by
// a direction bit and the Exp-Golomb (k = 0) code of the excess distance, all
// coded as equiprobable binary decisions.

#ifndef LMC_RANGE_CODER_HPP_
#define LMC_RANGE_CODER_HPP_

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "lmc/tensor.hpp"

namespace lmc {

inline constexpr int kCdfPrecision = 16;
inline constexpr std::uint32_t kCdfTotal = 1u << kCdfPrecision;
inline constexpr std::size_t kMaxAlphabet = 1u << 15;

// Cumulative counts for symbols lo, lo+1, ..., hi and an optional trailing
// escape slot. cumulative.front() == 0, cumulative.back() == 2^16, and every
// slot holds at least one count.
struct CdfTable {
  std::int32_t lo = 0;
  std::vector<std::uint32_t> cumulative;
  bool has_escape = false;

  std::size_t alphabet() const {
    return cumulative.size() - 1 - (has_escape ? 1 : 0);
  }
  std::int32_t hi() const {
    return lo + static_cast<std::int32_t>(alphabet()) - 1;
  }
  std::uint32_t count(std::size_t slot) const {
    return cumulative[slot + 1] - cumulative[slot];
  }
  // Ideal code length of `symbol` under this table, escape bits included.
  double cost_bits(std::int32_t symbol) const;
};

// Quantizes `probs` (for symbols lo .. lo+n-1) into a table. Each slot gets one
// count, the remaining 2^16 - slots counts are shared in proportion to the
// probabilities by largest remainder (ties go to the lower slot). With
// `escape_mass` set, an escape slot is appended and weighted by that mass.
CdfTable build_cdf_table(std::span<const double> probs, std::int32_t lo,
                         std::optional<double> escape_mass = std::nullopt);

class RangeEncoder {
 public:
  RangeEncoder();
  void encode(std::int32_t symbol, const CdfTable& table);
  // Terminates the stream and returns its bytes. The encoder is reset.
  std::vector<std::uint8_t> finish();

 private:
  void encode_slot(std::uint32_t start, std::uint32_t size);
  void encode_bit(unsigned bit);
  void shift_low();

  std::uint64_t low_ = 0;
  std::uint32_t range_ = 0xFFFFFFFFu;
  std::uint8_t cache_ = 0;
  std::uint64_t cache_size_ = 1;
  std::vector<std::uint8_t> out_;
};

class RangeDecoder {
 public:
  explicit RangeDecoder(std::span<const std::uint8_t> bytes);
  std::int32_t decode(const CdfTable& table);
  // Throws unless the payload is exactly the canonical termination the
  // encoder would have written: no unused or trailing bytes, and the final
  // code value equal to the encoder's choice.
  void finish() const;

 private:
  std::size_t decode_slot(const CdfTable& table);
  unsigned decode_bit();
  std::uint8_t next_byte();

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
  std::uint32_t code_ = 0;
  std::uint32_t range_ = 0xFFFFFFFFu;
  std::uint32_t low_ = 0;  // encoder's low, modulo 2^32
};

std::vector<std::uint8_t> encode_symbols(std::span<const std::int32_t> symbols,
                                         std::span<const CdfTable> tables);
std::vector<std::int32_t> decode_symbols(std::span<const std::uint8_t> bytes,
                                         std::span<const CdfTable> tables);

// -- Byte helpers ------------------------------------------------------------------

void put_varint(std::vector<std::uint8_t>& out, std::uint64_t value);
// Reads a LEB128 varint at `pos`, advancing it. Throws on truncation or
// values wider than 64 bits.
std::uint64_t get_varint(std::span<const std::uint8_t> in, std::size_t& pos);

// [varint length][payload]
void put_chunk(std::vector<std::uint8_t>& out,
               std::span<const std::uint8_t> payload);
std::span<const std::uint8_t> get_chunk(std::span<const std::uint8_t> in,
                                        std::size_t& pos);

}  // namespace lmc

#endif  // LMC_RANGE_CODER_HPP_
