#include "munmt/lingua/masking.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace munmt::lingua {

std::size_t mask_span_length(std::size_t len, const MaskPolicy& policy) {
  const auto span = static_cast<std::size_t>(std::ceil(static_cast<double>(len) * policy.span_ratio));
  return std::clamp<std::size_t>(span, 1, std::max<std::size_t>(len, 1));
}

MaskedExample mask_at(const TokenSeq& seq, std::size_t span_start, const MaskPolicy& policy) {
  if (seq.size() < 2) throw std::invalid_argument("sequence too short to mask");
  MaskedExample ex;
  ex.span_len = mask_span_length(seq.size(), policy);
  ex.span_start = std::min(span_start, seq.size() - ex.span_len);
  ex.input = seq;
  ex.target.assign(seq.begin() + static_cast<std::ptrdiff_t>(ex.span_start),
                   seq.begin() + static_cast<std::ptrdiff_t>(ex.span_start + ex.span_len));
  std::fill_n(ex.input.begin() + static_cast<std::ptrdiff_t>(ex.span_start), ex.span_len, kMask);
  return ex;
}

MaskedExample mass_mask(const TokenSeq& seq, Rng& rng, const MaskPolicy& policy) {
  if (seq.size() < 2) throw std::invalid_argument("sequence too short to mask");
  const std::size_t span_len = mask_span_length(seq.size(), policy);
  const std::size_t last_start = seq.size() - span_len;
  const double u = rng.uniform();
  std::size_t start;
  if (u < policy.p_start_zero) {
    start = 0;
  } else if (u < policy.p_start_zero + policy.p_start_middle) {
    start = std::min(seq.size() / 2, last_start);
  } else {
    start = static_cast<std::size_t>(rng.below(last_start + 1));
  }
  return mask_at(seq, start, policy);
}

}  // namespace munmt::lingua
