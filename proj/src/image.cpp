#include "mgslam/errors.hpp"
#include "mgslam/image.hpp"

#include <algorithm>
#include <cmath>

namespace mgslam {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::NonPositiveDepth: return "NonPositiveDepth";
        case ErrorCode::NonPositiveInverseDepth: return "NonPositiveInverseDepth";
        case ErrorCode::DegenerateConfiguration: return "DegenerateConfiguration";
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::BehindCamera: return "BehindCamera";
        case ErrorCode::SingularSystem: return "SingularSystem";
        case ErrorCode::ZeroVector: return "ZeroVector";
        case ErrorCode::DuplicateId: return "DuplicateId";
        case ErrorCode::UnknownKeyframe: return "UnknownKeyframe";
        case ErrorCode::EmptyStore: return "EmptyStore";
        case ErrorCode::RecencyViolation: return "RecencyViolation";
        case ErrorCode::NoAssociations: return "NoAssociations";
        case ErrorCode::InvalidSpec: return "InvalidSpec";
        case ErrorCode::MalformedIndex: return "MalformedIndex";
        case ErrorCode::MissingImage: return "MissingImage";
        case ErrorCode::IoError: return "IoError";
        case ErrorCode::InvalidConfig: return "InvalidConfig";
    }
    return "Unknown";
}

ScalarImage to_gray(const Image& img) {
    ScalarImage g(img.width, img.height);
    for (std::size_t i = 0; i < img.pixel_count(); ++i)
        g.data[i] = 0.299 * img.data[3 * i] + 0.587 * img.data[3 * i + 1] + 0.114 * img.data[3 * i + 2];
    return g;
}

double sample_bilinear(const ScalarImage& img, double x, double y) {
    x = std::clamp(x, 0.0, double(img.width - 1));
    y = std::clamp(y, 0.0, double(img.height - 1));
    const int x0 = std::min(int(std::floor(x)), img.width - 2 < 0 ? 0 : img.width - 2);
    const int y0 = std::min(int(std::floor(y)), img.height - 2 < 0 ? 0 : img.height - 2);
    const int x1 = std::min(x0 + 1, img.width - 1);
    const int y1 = std::min(y0 + 1, img.height - 1);
    const double ax = x - x0, ay = y - y0;
    return (1 - ay) * ((1 - ax) * img.at(x0, y0) + ax * img.at(x1, y0)) +
           ay * ((1 - ax) * img.at(x0, y1) + ax * img.at(x1, y1));
}

}  // namespace mgslam
