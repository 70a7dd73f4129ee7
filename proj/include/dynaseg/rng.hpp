#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace dynaseg {

// Deterministic randomness. Every stochastic component takes an explicit
// seed (usually derived from the run seed plus a component tag) so that
// results are reproducible regardless of call order or thread scheduling.

uint64_t splitmix64(uint64_t x);

// Stable stream seed for a named component, e.g.
// derive_seed(cfg.seed, "weights") or derive_seed(cfg.seed, "batch", 3).
uint64_t derive_seed(uint64_t base, std::string_view tag, uint64_t index = 0);

class Rng {
public:
    explicit Rng(uint64_t seed) : engine_(seed) {}

    double uniform(double lo, double hi);
    double normal(double mean, double stddev);
    // Integer in [0, n).
    uint64_t below(uint64_t n);

    // k distinct indices drawn from [0, n), in ascending order.
    std::vector<int> sample_without_replacement(int n, int k);

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
};

// Process-wide default seed used by components not wired to a config.
// Two runs that call seed_all with the same value and then perform the
// same operations produce identical results.
void seed_all(uint64_t seed);
uint64_t global_seed();

}  // namespace dynaseg
