#pragma once

#include "mgslam/geometry.hpp"
#include "mgslam/image.hpp"

#include <cstdint>
#include <vector>

namespace mgslam {

struct SamplerConfig {
    int patches_per_frame = 96;
    int grid_rows = 4;
    int grid_cols = 6;
    int suppression_radius = 7;
    int border = 3;  // minimum distance of a center from the image border

    void validate() const;
};

/// Uniform integer patch centers at least `border` pixels from the image edge.
/// Deterministic for a fixed seed.
std::vector<Pixel> random_sample(int width, int height, const SamplerConfig& config, std::uint64_t seed);

/// Per-pixel summed RGB L1 error, zero outside the valid border.
ScalarImage l1_error_map(const Image& image, const Image& rendered);

/// Grid-partitioned greedy selection of the worst-rendered pixels with
/// neighbour suppression. Returns exactly patches_per_frame centers.
std::vector<Pixel> render_guided_sample(const Image& image, const Image& rendered, const SamplerConfig& config);

/// Per-cell quotas: floor(n / cells) each, remainder to the cells with the
/// largest total error (ties to the lower row-major cell index).
std::vector<int> cell_quotas(const std::vector<double>& cell_error, int patches);

}  // namespace mgslam
