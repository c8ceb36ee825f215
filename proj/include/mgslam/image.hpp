#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <vector>

namespace mgslam {

/// Interleaved RGB image with double channels, nominally in [0,1].
struct Image {
    int width = 0;
    int height = 0;
    std::vector<double> data;  // row-major, 3 channels per pixel

    Image() = default;
    Image(int w, int h, double fill = 0.0) : width(w), height(h), data(std::size_t(w) * h * 3, fill) {}

    bool empty() const { return width == 0 || height == 0; }
    std::size_t pixel_count() const { return std::size_t(width) * height; }

    double& at(int x, int y, int c) { return data[(std::size_t(y) * width + x) * 3 + c]; }
    double at(int x, int y, int c) const { return data[(std::size_t(y) * width + x) * 3 + c]; }

    Eigen::Vector3d rgb(int x, int y) const {
        const double* p = &data[(std::size_t(y) * width + x) * 3];
        return {p[0], p[1], p[2]};
    }
    void set_rgb(int x, int y, const Eigen::Vector3d& v) {
        double* p = &data[(std::size_t(y) * width + x) * 3];
        p[0] = v[0];
        p[1] = v[1];
        p[2] = v[2];
    }

    bool same_size(const Image& o) const { return width == o.width && height == o.height; }
};

/// Single-channel image, used for depth, alpha and error maps.
struct ScalarImage {
    int width = 0;
    int height = 0;
    std::vector<double> data;

    ScalarImage() = default;
    ScalarImage(int w, int h, double fill = 0.0) : width(w), height(h), data(std::size_t(w) * h, fill) {}

    double& at(int x, int y) { return data[std::size_t(y) * width + x]; }
    double at(int x, int y) const { return data[std::size_t(y) * width + x]; }
};

/// Luminance-weighted grayscale conversion.
ScalarImage to_gray(const Image& img);

/// Bilinear sample of a grayscale image; coordinates clamped to the border.
double sample_bilinear(const ScalarImage& img, double x, double y);

}  // namespace mgslam
