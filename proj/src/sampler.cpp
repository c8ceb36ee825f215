#include "mgslam/sampler.hpp"

#include "mgslam/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace mgslam {

void SamplerConfig::validate() const {
    if (patches_per_frame < 0) throw Error(ErrorCode::InvalidConfig, "patches_per_frame must be >= 0");
    if (grid_rows < 1 || grid_cols < 1) throw Error(ErrorCode::InvalidConfig, "grid dimensions must be >= 1");
    if (suppression_radius < 1) throw Error(ErrorCode::InvalidConfig, "suppression_radius must be >= 1");
    if (border < 0) throw Error(ErrorCode::InvalidConfig, "border must be >= 0");
}

std::vector<Pixel> random_sample(int width, int height, const SamplerConfig& config, std::uint64_t seed) {
    config.validate();
    const int x_hi = width - 1 - config.border, y_hi = height - 1 - config.border;
    if (x_hi < config.border || y_hi < config.border) throw Error(ErrorCode::DimensionMismatch, "image too small");
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> ux(config.border, x_hi), uy(config.border, y_hi);
    std::vector<Pixel> out;
    out.reserve(config.patches_per_frame);
    for (int i = 0; i < config.patches_per_frame; ++i) {
        const int x = ux(rng);
        const int y = uy(rng);
        out.emplace_back(x, y);
    }
    return out;
}

ScalarImage l1_error_map(const Image& image, const Image& rendered) {
    if (!image.same_size(rendered)) throw Error(ErrorCode::DimensionMismatch, "rendered and reference differ in size");
    ScalarImage err(image.width, image.height);
    for (std::size_t i = 0; i < image.pixel_count(); ++i) {
        double e = 0.0;
        for (int c = 0; c < 3; ++c) e += std::abs(image.data[3 * i + c] - rendered.data[3 * i + c]);
        err.data[i] = e;
    }
    return err;
}

std::vector<int> cell_quotas(const std::vector<double>& cell_error, int patches) {
    const int cells = int(cell_error.size());
    std::vector<int> quota(cells, cells > 0 ? patches / cells : 0);
    if (cells == 0) return quota;
    const int remainder = patches - (patches / cells) * cells;
    std::vector<int> order(cells);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return cell_error[a] > cell_error[b]; });
    for (int i = 0; i < remainder; ++i) ++quota[order[i]];
    return quota;
}

namespace {

struct Cell {
    int x0, x1, y0, y1;  // half-open pixel ranges, already clipped to the border
};

}  // namespace

std::vector<Pixel> render_guided_sample(const Image& image, const Image& rendered, const SamplerConfig& config) {
    config.validate();
    const ScalarImage err = l1_error_map(image, rendered);
    const int w = image.width, h = image.height;
    const int b = config.border;
    if (w - 2 * b < 1 || h - 2 * b < 1) throw Error(ErrorCode::DimensionMismatch, "image too small");

    std::vector<Cell> cells;
    std::vector<double> cell_error;
    for (int r = 0; r < config.grid_rows; ++r) {
        for (int c = 0; c < config.grid_cols; ++c) {
            Cell cell{std::max(c * w / config.grid_cols, b), std::min((c + 1) * w / config.grid_cols, w - b),
                      std::max(r * h / config.grid_rows, b), std::min((r + 1) * h / config.grid_rows, h - b)};
            double total = 0.0;
            for (int y = cell.y0; y < cell.y1; ++y)
                for (int x = cell.x0; x < cell.x1; ++x) total += err.at(x, y);
            cells.push_back(cell);
            cell_error.push_back(total);
        }
    }
    const std::vector<int> quota = cell_quotas(cell_error, config.patches_per_frame);

    // 0 = available, 1 = suppressed, 2 = taken
    std::vector<unsigned char> state(std::size_t(w) * h, 0);
    const int rad = config.suppression_radius;
    const int rad2 = rad * rad;
    std::vector<Pixel> out;
    out.reserve(config.patches_per_frame);

    auto take_best = [&](const Cell& cell, bool allow_suppressed) -> bool {
        int bx = -1, by = -1;
        double best = -1.0;
        for (int y = cell.y0; y < cell.y1; ++y) {
            for (int x = cell.x0; x < cell.x1; ++x) {
                const auto s = state[std::size_t(y) * w + x];
                if (s == 2 || (s == 1 && !allow_suppressed)) continue;
                if (err.at(x, y) > best) {
                    best = err.at(x, y);
                    bx = x;
                    by = y;
                }
            }
        }
        if (bx < 0) return false;
        out.emplace_back(bx, by);
        state[std::size_t(by) * w + bx] = 2;
        for (int y = std::max(cell.y0, by - rad + 1); y < std::min(cell.y1, by + rad); ++y) {
            for (int x = std::max(cell.x0, bx - rad + 1); x < std::min(cell.x1, bx + rad); ++x) {
                auto& s = state[std::size_t(y) * w + x];
                if (s == 0 && (x - bx) * (x - bx) + (y - by) * (y - by) < rad2) s = 1;
            }
        }
        return true;
    };

    for (std::size_t i = 0; i < cells.size(); ++i) {
        for (int q = 0; q < quota[i]; ++q) {
            if (!take_best(cells[i], false) && !take_best(cells[i], true)) break;
        }
    }
    // Tiny cells can run out of pixels; top up from the whole valid region.
    const Cell whole{b, w - b, b, h - b};
    while (int(out.size()) < config.patches_per_frame) {
        if (!take_best(whole, false) && !take_best(whole, true)) break;
    }
    return out;
}

}  // namespace mgslam
