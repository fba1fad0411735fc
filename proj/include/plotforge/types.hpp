#pragma once

#include <cstddef>
#include <cstdint>

namespace plotforge {

using TokenId = std::int32_t;

// Half-open index range [begin, end).
struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - begin; }
  bool empty() const { return end <= begin; }
  friend bool operator==(const Span&, const Span&) = default;
};

}  // namespace plotforge
