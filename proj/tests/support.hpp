#pragma once

// Shared test scaffolding: temp directories, random map builders. The
// numerical oracles deliberately live inside the test files that use them.

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <random>
#include <string>

#include "dynaseg/types.hpp"

namespace testsup {

class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("dynaseg_" + tag + "_" + std::to_string(::getpid()) + "_" +
                 std::to_string(counter.fetch_add(1)));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }
    std::string str() const { return path_.string(); }

private:
    std::filesystem::path path_;
};

inline dynaseg::ResponseMap random_response(int h, int w, int c, uint32_t seed,
                                            bool normalized = true) {
    std::mt19937 gen(seed);
    std::normal_distribution<double> dist(0.0, 1.0);
    dynaseg::PlaneMatrix v(static_cast<Eigen::Index>(h) * w, c);
    for (Eigen::Index i = 0; i < v.rows(); ++i)
        for (int j = 0; j < c; ++j) v(i, j) = dist(gen);
    return dynaseg::ResponseMap(h, w, std::move(v), normalized);
}

inline dynaseg::ImageTensor random_image(int h, int w, uint32_t seed) {
    std::mt19937 gen(seed);
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    dynaseg::PlaneMatrix px(static_cast<Eigen::Index>(h) * w, 3);
    for (Eigen::Index i = 0; i < px.rows(); ++i)
        for (int j = 0; j < 3; ++j) px(i, j) = dist(gen);
    return dynaseg::ImageTensor(h, w, std::move(px));
}

inline std::string data_file(const std::string& name) {
    return std::string(DYNASEG_TEST_DATA) + "/" + name;
}

}  // namespace testsup
