#pragma once

#include <cstdint>
#include <limits>
#include <random>

namespace calib {

/// Seeded random stream. The engine state is derived from
/// (master_seed, stream_id) by a SplitMix64 mix, so streams with distinct ids
/// are decorrelated and any stream can be recreated from its two ids alone.
class Rng {
public:
    using result_type = std::uint64_t;

    Rng() : Rng(0, 0) {}
    Rng(std::uint64_t master_seed, std::uint64_t stream_id);

    std::uint64_t master_seed() const { return master_seed_; }
    std::uint64_t stream_id() const { return stream_id_; }

    /// Child stream keyed by this stream's identity and `child_id`.
    Rng fork(std::uint64_t child_id) const;

    static constexpr result_type min() { return std::mt19937_64::min(); }
    static constexpr result_type max() { return std::mt19937_64::max(); }
    result_type operator()() { return engine_(); }

    /// Uniform on [0, 1).
    double uniform();
    double normal();
    double gamma(double shape);

private:
    std::uint64_t master_seed_;
    std::uint64_t stream_id_;
    std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace calib
