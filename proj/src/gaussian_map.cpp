#include "mgslam/gaussian_map.hpp"

#include "mgslam/errors.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

namespace mgslam {

void GaussianMap::add(const GaussianPrimitive& g, FrameId creation_frame) {
    primitives_.push_back(g);
    creation_frame_.push_back(creation_frame);
}

std::size_t GaussianMap::retain(const std::vector<bool>& keep) {
    std::size_t out = 0;
    for (std::size_t i = 0; i < primitives_.size(); ++i) {
        if (!keep[i]) continue;
        primitives_[out] = primitives_[i];
        creation_frame_[out] = creation_frame_[i];
        ++out;
    }
    const std::size_t removed = primitives_.size() - out;
    primitives_.resize(out);
    creation_frame_.resize(out);
    return removed;
}

std::vector<GaussianPrimitive> init_from_patches(std::span<const Patch> patches, const Frame& frame,
                                                 const Intrinsics& k) {
    std::vector<GaussianPrimitive> out;
    out.reserve(patches.size());
    for (const Patch& p : patches) {
        if (!(p.inv_depth > 0.0)) throw Error(ErrorCode::NonPositiveDepth, "patch depth must be positive");
        const double depth = 1.0 / p.inv_depth;
        GaussianPrimitive g;
        g.position = backproject(p.center, p.inv_depth, frame.pose, k);
        g.log_scale = Vec3(depth / k.fx, depth / k.fy, 2.0 * depth / (k.fx + k.fy)).array().log();
        g.opacity_logit = logit(0.5);
        if (frame.image) {
            const int x = std::clamp(int(std::lround(p.center.x())), 0, frame.image->width - 1);
            const int y = std::clamp(int(std::lround(p.center.y())), 0, frame.image->height - 1);
            g.color = frame.image->rgb(x, y);
        }
        out.push_back(g);
    }
    return out;
}

std::string map_header(std::size_t count) {
    std::ostringstream h;
    h << "MGSLAM_GAUSSIANS 1\n"
      << "format binary_little_endian f32\n"
      << "fields px py pz qx qy qz qw sx sy sz opacity r g b\n"
      << "count " << count << "\n"
      << "end_header\n";
    return h.str();
}

namespace {

void put_f32(std::string& buf, double v) {
    const auto f = static_cast<float>(v);
    std::uint32_t bits = std::bit_cast<std::uint32_t>(f);
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
    char bytes[4];
    std::memcpy(bytes, &bits, 4);
    buf.append(bytes, 4);
}

float get_f32(const char* p) {
    std::uint32_t bits;
    std::memcpy(&bits, p, 4);
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
    return std::bit_cast<float>(bits);
}

}  // namespace

void export_map(const GaussianMap& map, const std::filesystem::path& path) {
    std::string buf = map_header(map.size());
    buf.reserve(buf.size() + map.size() * 56);
    for (const auto& g : map.primitives()) {
        const Eigen::Quaterniond q = g.quaternion();
        const Vec3 s = g.scale();
        for (int i = 0; i < 3; ++i) put_f32(buf, g.position[i]);
        put_f32(buf, q.x());
        put_f32(buf, q.y());
        put_f32(buf, q.z());
        put_f32(buf, q.w());
        for (int i = 0; i < 3; ++i) put_f32(buf, s[i]);
        put_f32(buf, g.opacity());
        for (int i = 0; i < 3; ++i) put_f32(buf, g.color[i]);
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    out.write(buf.data(), std::streamsize(buf.size()));
    if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

GaussianMap import_map(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
    std::string line;
    std::size_t count = 0;
    bool magic = false, done = false;
    while (std::getline(in, line)) {
        if (line.rfind("MGSLAM_GAUSSIANS", 0) == 0) magic = true;
        if (line.rfind("count ", 0) == 0) count = std::stoull(line.substr(6));
        if (line == "end_header") {
            done = true;
            break;
        }
    }
    if (!magic || !done) throw Error(ErrorCode::IoError, "not a map file: " + path.string());
    std::string body(count * 56, '\0');
    in.read(body.data(), std::streamsize(body.size()));
    if (std::size_t(in.gcount()) != body.size()) throw Error(ErrorCode::IoError, "truncated map file");

    GaussianMap map;
    for (std::size_t i = 0; i < count; ++i) {
        const char* p = body.data() + i * 56;
        float v[14];
        for (int j = 0; j < 14; ++j) v[j] = get_f32(p + 4 * j);
        GaussianPrimitive g;
        g.position = Vec3(v[0], v[1], v[2]);
        g.rotation = Eigen::Vector4d(v[3], v[4], v[5], v[6]);
        g.log_scale = Vec3(std::log(double(v[7])), std::log(double(v[8])), std::log(double(v[9])));
        g.opacity_logit = logit(double(v[10]));
        g.color = Vec3(v[11], v[12], v[13]);
        map.add(g, -1);
    }
    return map;
}

}  // namespace mgslam
