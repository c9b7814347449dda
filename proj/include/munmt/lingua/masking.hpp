#pragma once

#include <cstddef>

#include "munmt/common/rng.hpp"
#include "munmt/lingua/vocabulary.hpp"

namespace munmt::lingua {

// A sentence with one contiguous span replaced by MASK tokens.
struct MaskedExample {
  TokenSeq input;
  TokenSeq target;
  std::size_t span_start = 0;
  std::size_t span_len = 0;
};

struct MaskPolicy {
  double span_ratio = 0.5;     // span_len = max(1, ceil(len * span_ratio))
  double p_start_zero = 0.2;   // start at 0
  double p_start_middle = 0.2; // start at floor(len / 2)
};

std::size_t mask_span_length(std::size_t len, const MaskPolicy& policy = {});

// Start index is 0 with probability p_start_zero, floor(len/2) with
// probability p_start_middle, and uniform over the valid starts otherwise.
// The middle start is clamped to len - span_len.
MaskedExample mass_mask(const TokenSeq& seq, Rng& rng, const MaskPolicy& policy = {});

// Builds the example for a fixed start (clamped like mass_mask does).
MaskedExample mask_at(const TokenSeq& seq, std::size_t span_start, const MaskPolicy& policy = {});

}  // namespace munmt::lingua
