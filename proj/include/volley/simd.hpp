#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <string>
#include <utility>
#include <vector>

#include "volley/errors.hpp"

namespace volley {

inline constexpr std::size_t kDefaultSlots = 32768;

inline bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

// Slot count resolution order: explicit argument, then VOLLEY_SLOTS, then default.
inline std::size_t env_default_slots() {
  if (const char* s = std::getenv("VOLLEY_SLOTS")) {
    char* end = nullptr;
    unsigned long long v = std::strtoull(s, &end, 10);
    if (end && *end == '\0' && is_power_of_two(static_cast<std::size_t>(v)))
      return static_cast<std::size_t>(v);
    throw Error("VOLLEY_SLOTS must be a power of two, got \"" + std::string(s) + "\"");
  }
  return kDefaultSlots;
}

struct OpCounts {
  std::uint64_t rotations = 0;
  std::uint64_t cipher_mults = 0;
  std::uint64_t const_mults = 0;
  std::uint64_t adds = 0;

  std::uint64_t total() const { return rotations + cipher_mults + const_mults + adds; }

  friend OpCounts operator-(OpCounts a, const OpCounts& b) {
    a.rotations -= b.rotations;
    a.cipher_mults -= b.cipher_mults;
    a.const_mults -= b.const_mults;
    a.adds -= b.adds;
    return a;
  }
  friend bool operator==(const OpCounts&, const OpCounts&) = default;
};

class SlotEngine;

// Opaque ciphertext stand-in. Slot data is reachable only through SlotEngine,
// so everything above this layer is forced through the five primitives.
class SlotVector {
 public:
  SlotVector() = default;
  std::size_t slot_count() const { return slots_.size(); }
  bool empty() const { return slots_.empty(); }

 private:
  friend class SlotEngine;
  explicit SlotVector(std::vector<double> s) : slots_(std::move(s)) {}
  std::vector<double> slots_;
};

class SlotEngine {
 public:
  explicit SlotEngine(std::size_t default_slots = env_default_slots())
      : default_slots_(default_slots) {
    check_slot_count(default_slots_);
  }

  std::size_t default_slots() const { return default_slots_; }

  SlotVector encode(const std::vector<double>& values) { return encode(values, default_slots_); }

  SlotVector encode(const std::vector<double>& values, std::size_t slot_count) {
    check_slot_count(slot_count);
    if (values.size() > slot_count)
      throw OverflowError("encode: " + std::to_string(values.size()) + " values exceed " +
                          std::to_string(slot_count) + " slots");
    std::vector<double> s(slot_count, 0.0);
    std::copy(values.begin(), values.end(), s.begin());
    return SlotVector(std::move(s));
  }

  std::vector<double> decode(const SlotVector& v) const { return v.slots_; }

  // Left cyclic rotation: result[i] = v[(i + k) mod s]. Negative k rotates right.
  // Any nonzero residue costs one rotation; k ≡ 0 (mod s) is free.
  SlotVector rot(const SlotVector& v, std::int64_t k) {
    const std::int64_t s = static_cast<std::int64_t>(v.slot_count());
    if (s == 0) throw ShapeMismatch("rot: empty vector");
    std::int64_t r = k % s;
    if (r < 0) r += s;
    if (r == 0) return v;
    rotations_.fetch_add(1, std::memory_order_relaxed);
    std::vector<double> out(v.slots_.size());
    std::rotate_copy(v.slots_.begin(), v.slots_.begin() + r, v.slots_.end(), out.begin());
    return SlotVector(std::move(out));
  }

  SlotVector add(const SlotVector& a, const SlotVector& b) {
    require_same(a, b, "add");
    adds_.fetch_add(1, std::memory_order_relaxed);
    std::vector<double> out(a.slots_.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.slots_[i] + b.slots_[i];
    return SlotVector(std::move(out));
  }

  SlotVector mul(const SlotVector& a, const SlotVector& b) {
    require_same(a, b, "mul");
    cipher_mults_.fetch_add(1, std::memory_order_relaxed);
    std::vector<double> out(a.slots_.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.slots_[i] * b.slots_[i];
    return SlotVector(std::move(out));
  }

  // Plaintext operand is implicitly encoded: shorter masks are zero-padded.
  SlotVector cmul(const SlotVector& v, const std::vector<double>& plain) {
    if (plain.size() > v.slot_count())
      throw OverflowError("cmul: mask longer than slot vector");
    const_mults_.fetch_add(1, std::memory_order_relaxed);
    std::vector<double> out(v.slots_.size(), 0.0);
    for (std::size_t i = 0; i < plain.size(); ++i) out[i] = v.slots_[i] * plain[i];
    return SlotVector(std::move(out));
  }

  SlotVector cmul(const SlotVector& v, double scalar) {
    const_mults_.fetch_add(1, std::memory_order_relaxed);
    std::vector<double> out(v.slots_);
    for (double& x : out) x *= scalar;
    return SlotVector(std::move(out));
  }

  SlotVector cadd(const SlotVector& v, const std::vector<double>& plain) {
    if (plain.size() > v.slot_count())
      throw OverflowError("cadd: constant longer than slot vector");
    adds_.fetch_add(1, std::memory_order_relaxed);
    std::vector<double> out(v.slots_);
    for (std::size_t i = 0; i < plain.size(); ++i) out[i] += plain[i];
    return SlotVector(std::move(out));
  }

  OpCounts counts() const {
    OpCounts c;
    c.rotations = rotations_.load(std::memory_order_relaxed);
    c.cipher_mults = cipher_mults_.load(std::memory_order_relaxed);
    c.const_mults = const_mults_.load(std::memory_order_relaxed);
    c.adds = adds_.load(std::memory_order_relaxed);
    return c;
  }

  void reset_counts() {
    rotations_.store(0, std::memory_order_relaxed);
    cipher_mults_.store(0, std::memory_order_relaxed);
    const_mults_.store(0, std::memory_order_relaxed);
    adds_.store(0, std::memory_order_relaxed);
  }

 private:
  static void check_slot_count(std::size_t n) {
    if (!is_power_of_two(n))
      throw Error("slot count must be a power of two, got " + std::to_string(n));
  }

  static void require_same(const SlotVector& a, const SlotVector& b, const char* op) {
    if (a.slot_count() != b.slot_count())
      throw ShapeMismatch(std::string(op) + ": slot counts differ (" +
                          std::to_string(a.slot_count()) + " vs " +
                          std::to_string(b.slot_count()) + ")");
  }

  std::size_t default_slots_;
  std::atomic<std::uint64_t> rotations_{0};
  std::atomic<std::uint64_t> cipher_mults_{0};
  std::atomic<std::uint64_t> const_mults_{0};
  std::atomic<std::uint64_t> adds_{0};
};

}  // namespace volley
