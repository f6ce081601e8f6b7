#include "calib/rng.hpp"

namespace calib {

std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

Rng::Rng(std::uint64_t master_seed, std::uint64_t stream_id)
    : master_seed_(master_seed), stream_id_(stream_id)
{
    const std::uint64_t a = splitmix64(master_seed);
    const std::uint64_t b = splitmix64(a ^ splitmix64(stream_id + 0x632be59bd9b4e019ULL));
    std::seed_seq seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                      static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
    engine_.seed(seq);
}

Rng Rng::fork(std::uint64_t child_id) const
{
    return Rng(splitmix64(master_seed_ ^ splitmix64(stream_id_)), child_id);
}

double Rng::uniform()
{
    // 53 random mantissa bits
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::normal()
{
    std::normal_distribution<double> dist(0.0, 1.0);
    return dist(engine_);
}

double Rng::gamma(double shape)
{
    std::gamma_distribution<double> dist(shape, 1.0);
    return dist(engine_);
}

}  // namespace calib
