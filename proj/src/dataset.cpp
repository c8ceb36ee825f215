#include "mgslam/dataset.hpp"

#include "mgslam/errors.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <fstream>
#include <sstream>

namespace mgslam {

DatasetFormat parse_dataset_format(const std::string& name) {
    if (name == "tum_rgb" || name == "tum") return DatasetFormat::tum_rgb;
    if (name == "image_dir") return DatasetFormat::image_dir;
    throw Error(ErrorCode::InvalidConfig, "unknown dataset format: " + name);
}

Image load_image(const std::filesystem::path& path, int width, int height) {
    cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
    if (bgr.empty()) throw Error(ErrorCode::MissingImage, "cannot read image " + path.string());
    if (width > 0 && height > 0 && (bgr.cols != width || bgr.rows != height))
        cv::resize(bgr, bgr, cv::Size(width, height), 0, 0, cv::INTER_AREA);
    Image img(bgr.cols, bgr.rows);
    for (int y = 0; y < bgr.rows; ++y) {
        const auto* row = bgr.ptr<cv::Vec3b>(y);
        for (int x = 0; x < bgr.cols; ++x)
            img.set_rgb(x, y, Vec3(row[x][2], row[x][1], row[x][0]) / 255.0);
    }
    return img;
}

void save_png(const Image& image, const std::filesystem::path& path) {
    cv::Mat bgr(image.height, image.width, CV_8UC3);
    for (int y = 0; y < image.height; ++y) {
        auto* row = bgr.ptr<cv::Vec3b>(y);
        for (int x = 0; x < image.width; ++x)
            for (int c = 0; c < 3; ++c)
                row[x][2 - c] = cv::saturate_cast<unsigned char>(std::lround(255.0 * image.at(x, y, c)));
    }
    if (!cv::imwrite(path.string(), bgr)) throw Error(ErrorCode::IoError, "cannot write " + path.string());
}

std::shared_ptr<const Image> Dataset::image(std::size_t i) const {
    return std::make_shared<Image>(load_image(frames.at(i).path, width, height));
}

namespace {

bool skip_line(const std::string& line) {
    const auto p = line.find_first_not_of(" \t\r");
    return p == std::string::npos || line[p] == '#';
}

}  // namespace

Dataset load_dataset(const std::filesystem::path& path, DatasetFormat format, int width, int height, double fps) {
    if (!std::filesystem::exists(path)) throw Error(ErrorCode::MissingImage, "dataset path not found: " + path.string());
    Dataset ds;
    ds.width = width;
    ds.height = height;
    if (format == DatasetFormat::tum_rgb) {
        std::ifstream in(path / "rgb.txt");
        if (!in) throw Error(ErrorCode::MalformedIndex, "missing rgb.txt in " + path.string());
        std::string line;
        int line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (skip_line(line)) continue;
            std::istringstream ss(line);
            DatasetFrame f;
            std::string rel;
            if (!(ss >> f.timestamp >> rel))
                throw Error(ErrorCode::MalformedIndex, "rgb.txt line " + std::to_string(line_no) + " is malformed");
            f.path = path / rel;
            if (!std::filesystem::exists(f.path)) throw Error(ErrorCode::MissingImage, "missing " + f.path.string());
            ds.frames.push_back(std::move(f));
        }
        std::stable_sort(ds.frames.begin(), ds.frames.end(),
                         [](const DatasetFrame& a, const DatasetFrame& b) { return a.timestamp < b.timestamp; });
        if (std::filesystem::exists(path / "groundtruth.txt")) {
            try {
                ds.groundtruth = read_trajectory(path / "groundtruth.txt");
            } catch (const Error& e) {
                throw Error(ErrorCode::MalformedIndex, std::string("groundtruth.txt: ") + e.what());
            }
        }
    } else {
        std::vector<std::filesystem::path> files;
        for (const auto& entry : std::filesystem::directory_iterator(path)) {
            if (!entry.is_regular_file()) continue;
            std::string ext = entry.path().extension().string();
            std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
            if (ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp" || ext == ".ppm")
                files.push_back(entry.path());
        }
        std::sort(files.begin(), files.end());
        for (std::size_t i = 0; i < files.size(); ++i) ds.frames.push_back({double(i) / fps, files[i]});
        if (ds.frames.empty()) throw Error(ErrorCode::MissingImage, "no images in " + path.string());
    }
    return ds;
}

}  // namespace mgslam
