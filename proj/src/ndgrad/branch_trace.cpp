#include "phasen/ndgrad/branch_trace.hpp"

namespace phasen::ndgrad {

thread_local BranchTrace* BranchTrace::current_ = nullptr;

BranchTrace::BranchTrace() : previous_(current_) { current_ = this; }

BranchTrace::~BranchTrace() { current_ = previous_; }

void BranchTrace::mix(std::uint64_t word) {
  std::uint64_t& s = current_->state_;
  s ^= word + 0x9e3779b97f4a7c15ull + (s << 6) + (s >> 2);
  s *= 0x100000001b3ull;
}

}  // namespace phasen::ndgrad
