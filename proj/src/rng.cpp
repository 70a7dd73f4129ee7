#include "dynaseg/rng.hpp"

#include <atomic>

namespace dynaseg {

uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

uint64_t derive_seed(uint64_t base, std::string_view tag, uint64_t index) {
    uint64_t h = splitmix64(base);
    for (char c : tag) h = splitmix64(h ^ static_cast<uint64_t>(static_cast<unsigned char>(c)));
    return splitmix64(h ^ index);
}

double Rng::uniform(double lo, double hi) {
    std::uniform_real_distribution<double> d(lo, hi);
    return d(engine_);
}

double Rng::normal(double mean, double stddev) {
    std::normal_distribution<double> d(mean, stddev);
    return d(engine_);
}

uint64_t Rng::below(uint64_t n) {
    std::uniform_int_distribution<uint64_t> d(0, n - 1);
    return d(engine_);
}

std::vector<int> Rng::sample_without_replacement(int n, int k) {
    // Partial Fisher-Yates over an index array, then sort the prefix.
    std::vector<int> idx(n);
    for (int i = 0; i < n; ++i) idx[i] = i;
    if (k > n) k = n;
    for (int i = 0; i < k; ++i) {
        int j = i + static_cast<int>(below(static_cast<uint64_t>(n - i)));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(k);
    std::sort(idx.begin(), idx.end());
    return idx;
}

namespace {
std::atomic<uint64_t> g_seed{0};
}

void seed_all(uint64_t seed) { g_seed.store(seed, std::memory_order_relaxed); }
uint64_t global_seed() { return g_seed.load(std::memory_order_relaxed); }

}  // namespace dynaseg
