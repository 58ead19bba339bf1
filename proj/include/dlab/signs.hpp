#pragma once

#include <cstddef>
#include <ranges>

#include "dlab/rational.hpp"

namespace dlab {

/// Number of strict sign flips after discarding zeros. Floating values are
/// zero only when bit-exactly zero.
template <std::ranges::input_range R>
std::size_t sign_changes(const R& seq) {
  std::size_t changes = 0;
  int last = 0;
  for (const auto& v : seq) {
    const int s = sign(v);
    if (s == 0) continue;
    if (last != 0 && s != last) ++changes;
    last = s;
  }
  return changes;
}

}  // namespace dlab
