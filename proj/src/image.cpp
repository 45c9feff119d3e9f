// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The bmae Authors

#include "bmae/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

namespace bmae {

ImageTensor::ImageTensor(int channels, int side)
    : channels_(channels), side_(side),
      pixels_(static_cast<std::size_t>(channels) * side * side, 0.0) {
    if (channels <= 0 || side <= 0)
        throw DimensionError("image needs positive channels and side");
}

ImageTensor::ImageTensor(int channels, int side, std::vector<double> pixels)
    : channels_(channels), side_(side), pixels_(std::move(pixels)) {
    if (channels <= 0 || side <= 0)
        throw DimensionError("image needs positive channels and side");
    if (pixels_.size() != static_cast<std::size_t>(channels) * side * side)
        throw DimensionError("pixel buffer does not match (C, S, S)");
}

void ImageTensor::validate_range() const {
    for (double v : pixels_)
        if (!(v >= 0.0 && v <= 1.0))
            throw InvalidArgument("pixel value outside [0, 1]");
}

ImageTensor ImageTensor::clamped() const {
    ImageTensor out = *this;
    for (double& v : out.pixels_)
        v = std::clamp(v, 0.0, 1.0);
    return out;
}

double mean_squared_error(const ImageTensor& a, const ImageTensor& b) {
    if (a.channels() != b.channels() || a.side() != b.side())
        throw DimensionError("mean_squared_error: shape mismatch");
    if (a.empty())
        return 0.0;
    double acc = 0.0;
    auto pa = a.pixels();
    auto pb = b.pixels();
    for (std::size_t i = 0; i < pa.size(); ++i) {
        const double d = pa[i] - pb[i];
        acc += d * d;
    }
    return acc / static_cast<double>(pa.size());
}

void write_ppm(const ImageTensor& image, const std::filesystem::path& path) {
    if (image.channels() != 3)
        throw InvalidArgument("write_ppm needs a 3-channel image");
    const int s = image.side();
    std::string out = "P6\n" + std::to_string(s) + " " + std::to_string(s) + "\n255\n";
    for (int y = 0; y < s; ++y)
        for (int x = 0; x < s; ++x)
            for (int c = 0; c < 3; ++c)
                out.push_back(static_cast<char>(std::lround(std::clamp(image.at(c, y, x), 0.0, 1.0) * 255.0)));
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f || !f.write(out.data(), static_cast<std::streamsize>(out.size())))
        throw IoError("cannot write " + path.string());
}

} // namespace bmae
