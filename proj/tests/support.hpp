// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The bmae Authors

#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "bmae/image.hpp"

namespace bmae::testing {

inline ImageTensor random_image(int channels, int side, Rng& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    ImageTensor img(channels, side);
    for (double& v : img.pixels())
        v = u(rng);
    return img;
}

/// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() / ("bmae_" + tag + "_" + std::to_string(rd()));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

} // namespace bmae::testing
