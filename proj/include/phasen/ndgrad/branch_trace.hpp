#pragma once

#include <cstddef>
#include <cstdint>

namespace phasen::ndgrad {

/// Digest of the branches taken by non-differentiable ops (PReLU sign,
/// guarded norms, power-law floor) while a trace is open on this thread.
/// Two evaluations with different digests sit on different smooth pieces.
class BranchTrace {
 public:
  BranchTrace();
  ~BranchTrace();
  BranchTrace(const BranchTrace&) = delete;
  BranchTrace& operator=(const BranchTrace&) = delete;

  std::uint64_t digest() const { return state_; }

  static bool active() { return current_ != nullptr; }
  static void mix(std::uint64_t word);

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ull;
  BranchTrace* previous_ = nullptr;
  static thread_local BranchTrace* current_;
};

/// Packs one predicate per element into 64-bit words and mixes them in.
template <typename Pred>
void trace_branches(std::size_t n, Pred&& taken) {
  if (!BranchTrace::active()) return;
  std::uint64_t word = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (taken(i)) word |= std::uint64_t{1} << (i & 63);
    if ((i & 63) == 63 || i + 1 == n) {
      BranchTrace::mix(word);
      word = 0;
    }
  }
}

}  // namespace phasen::ndgrad
