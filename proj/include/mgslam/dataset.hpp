#pragma once

#include "mgslam/geometry.hpp"
#include "mgslam/image.hpp"

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace mgslam {

enum class DatasetFormat { tum_rgb, image_dir };

DatasetFormat parse_dataset_format(const std::string& name);

struct DatasetFrame {
    double timestamp = 0.0;
    std::filesystem::path path;
};

/// Ordered frame stream with lazily decoded images.
struct Dataset {
    std::vector<DatasetFrame> frames;
    std::vector<StampedPose> groundtruth;  // empty when absent
    int width = 640;
    int height = 480;

    /// Decodes frame i, converts to RGB in [0,1] and resizes to width x height.
    /// Throws MissingImage.
    std::shared_ptr<const Image> image(std::size_t i) const;
};

/// tum_rgb: rgb.txt ("timestamp path") and optional groundtruth.txt.
/// image_dir: lexicographically sorted images, timestamps index / fps.
/// Throws MalformedIndex, MissingImage.
Dataset load_dataset(const std::filesystem::path& path, DatasetFormat format, int width = 640, int height = 480,
                     double fps = 30.0);

Image load_image(const std::filesystem::path& path, int width = 0, int height = 0);
void save_png(const Image& image, const std::filesystem::path& path);

}  // namespace mgslam
