#pragma once

#include <cstdint>

#include "paysent/common.hpp"
#include "paysent/ingest.hpp"

namespace paysent::pipeline {

// Random-insertion perturbation: a contiguous run of '0' (0x30) bytes of
// length max(1, floor(0.2 * len)), inserted at a seeded uniform index in
// [0, len]. Empty payloads pass through unchanged.
inline PayloadSample random_insertion(const PayloadSample& sample, std::uint64_t seed) {
    if (sample.payload.empty()) return sample;

    std::size_t len = sample.payload.size();
    std::size_t noise_len = std::max<std::size_t>(1, len / 5);

    Rng rng(mix_seed(seed, std::uint64_t(sample.id) ^ 0x696e73657274ULL));  // "insert"
    std::size_t index = std::size_t(rng.below(len + 1));

    PayloadSample out = sample;
    out.payload.clear();
    out.payload.reserve(len + noise_len);
    out.payload.insert(out.payload.end(), sample.payload.begin(), sample.payload.begin() + std::ptrdiff_t(index));
    out.payload.insert(out.payload.end(), noise_len, std::uint8_t('0'));
    out.payload.insert(out.payload.end(), sample.payload.begin() + std::ptrdiff_t(index), sample.payload.end());
    return out;
}

}  // namespace paysent::pipeline
