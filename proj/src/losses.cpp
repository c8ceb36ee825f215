#include "mgslam/losses.hpp"

#include "mgslam/errors.hpp"

#include <array>
#include <cmath>

namespace mgslam {

namespace {

constexpr int kWindow = 11;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

const std::array<double, kWindow>& kernel() {
    static const std::array<double, kWindow> k = [] {
        std::array<double, kWindow> w{};
        double sum = 0.0;
        for (int i = 0; i < kWindow; ++i) {
            const double d = i - kWindow / 2;
            w[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
            sum += w[i];
        }
        for (double& v : w) v /= sum;
        return w;
    }();
    return k;
}

struct Plane {
    int w = 0, h = 0;
    std::vector<double> v;
    Plane(int w_, int h_) : w(w_), h(h_), v(std::size_t(w_) * h_, 0.0) {}
    double& operator()(int x, int y) { return v[std::size_t(y) * w + x]; }
    double operator()(int x, int y) const { return v[std::size_t(y) * w + x]; }
};

// Valid-mode separable correlation.
Plane filter_valid(const Plane& in) {
    const auto& k = kernel();
    Plane rows(in.w - kWindow + 1, in.h);
    for (int y = 0; y < in.h; ++y)
        for (int x = 0; x < rows.w; ++x) {
            double s = 0.0;
            for (int i = 0; i < kWindow; ++i) s += k[i] * in(x + i, y);
            rows(x, y) = s;
        }
    Plane out(rows.w, in.h - kWindow + 1);
    for (int y = 0; y < out.h; ++y)
        for (int x = 0; x < out.w; ++x) {
            double s = 0.0;
            for (int i = 0; i < kWindow; ++i) s += k[i] * rows(x, y + i);
            out(x, y) = s;
        }
    return out;
}

// Adjoint of filter_valid.
Plane filter_adjoint(const Plane& in, int w, int h) {
    const auto& k = kernel();
    Plane cols(in.w, h);
    for (int y = 0; y < in.h; ++y)
        for (int x = 0; x < in.w; ++x)
            for (int i = 0; i < kWindow; ++i) cols(x, y + i) += k[i] * in(x, y);
    Plane out(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < in.w; ++x)
            for (int i = 0; i < kWindow; ++i) out(x + i, y) += k[i] * cols(x, y);
    return out;
}

Plane channel(const Image& img, int c) {
    Plane p(img.width, img.height);
    for (std::size_t i = 0; i < img.pixel_count(); ++i) p.v[i] = img.data[3 * i + c];
    return p;
}

void check_pair(const Image& a, const Image& b) {
    if (!a.same_size(b)) throw Error(ErrorCode::DimensionMismatch, "images differ in size");
    if (a.width < kWindow || a.height < kWindow)
        throw Error(ErrorCode::DimensionMismatch, "image smaller than the SSIM window");
}

double ssim_impl(const Image& a, const Image& b, Image* grad) {
    check_pair(a, b);
    const int vw = a.width - kWindow + 1, vh = a.height - kWindow + 1;
    const double n = double(vw) * vh * 3.0;
    double total = 0.0;
    for (int c = 0; c < 3; ++c) {
        const Plane x = channel(a, c), y = channel(b, c);
        Plane xx(x.w, x.h), yy(x.w, x.h), xy(x.w, x.h);
        for (std::size_t i = 0; i < x.v.size(); ++i) {
            xx.v[i] = x.v[i] * x.v[i];
            yy.v[i] = y.v[i] * y.v[i];
            xy.v[i] = x.v[i] * y.v[i];
        }
        const Plane mx = filter_valid(x), my = filter_valid(y);
        const Plane mxx = filter_valid(xx), myy = filter_valid(yy), mxy = filter_valid(xy);
        Plane d_mx(vw, vh), d_mxx(vw, vh), d_mxy(vw, vh);
        for (std::size_t i = 0; i < mx.v.size(); ++i) {
            const double ux = mx.v[i], uy = my.v[i];
            const double vx = mxx.v[i] - ux * ux, vy = myy.v[i] - uy * uy, cxy = mxy.v[i] - ux * uy;
            const double a1 = 2.0 * ux * uy + kC1, a2 = 2.0 * cxy + kC2;
            const double b1 = ux * ux + uy * uy + kC1, b2 = vx + vy + kC2;
            const double s = a1 * a2 / (b1 * b2);
            total += s;
            if (grad) {
                const double ds_dvar = -s / b2;
                const double ds_dcov = 2.0 * s / a2;
                d_mx.v[i] = s * (2.0 * uy / a1 - 2.0 * ux / b1) + ds_dvar * (-2.0 * ux) + ds_dcov * (-uy);
                d_mxx.v[i] = ds_dvar;
                d_mxy.v[i] = ds_dcov;
            }
        }
        if (grad) {
            const Plane g_mx = filter_adjoint(d_mx, a.width, a.height);
            const Plane g_mxx = filter_adjoint(d_mxx, a.width, a.height);
            const Plane g_mxy = filter_adjoint(d_mxy, a.width, a.height);
            for (std::size_t i = 0; i < x.v.size(); ++i)
                grad->data[3 * i + c] = (g_mx.v[i] + 2.0 * x.v[i] * g_mxx.v[i] + y.v[i] * g_mxy.v[i]) / n;
        }
    }
    return total / n;
}

}  // namespace

LossValue l1_loss(const Image& a, const Image& b) {
    if (!a.same_size(b)) throw Error(ErrorCode::DimensionMismatch, "images differ in size");
    LossValue out{0.0, Image(a.width, a.height)};
    const double n = double(a.data.size());
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        out.value += std::abs(d);
        out.gradient.data[i] = (d > 0.0 ? 1.0 : d < 0.0 ? -1.0 : 0.0) / n;
    }
    out.value /= n;
    return out;
}

double ssim(const Image& a, const Image& b) { return ssim_impl(a, b, nullptr); }

LossValue ssim_with_gradient(const Image& a, const Image& b) {
    LossValue out{0.0, Image(a.width, a.height)};
    out.value = ssim_impl(a, b, &out.gradient);
    return out;
}

LossValue color_loss(const Image& rendered, const Image& reference, double lambda_ssim) {
    LossValue l1 = l1_loss(rendered, reference);
    const LossValue s = ssim_with_gradient(rendered, reference);
    LossValue out{(1.0 - lambda_ssim) * l1.value + lambda_ssim * (1.0 - s.value), std::move(l1.gradient)};
    for (std::size_t i = 0; i < out.gradient.data.size(); ++i)
        out.gradient.data[i] = (1.0 - lambda_ssim) * out.gradient.data[i] - lambda_ssim * s.gradient.data[i];
    return out;
}

double scale_regularizer(std::span<const GaussianPrimitive> gaussians, double tau, std::vector<Vec3>* d_log_scale) {
    double total = 0.0;
    for (std::size_t i = 0; i < gaussians.size(); ++i) {
        const Vec3 s = gaussians[i].scale();
        for (int a = 0; a < 3; ++a) {
            const double excess = std::max(0.0, s[a] - tau);
            total += excess * excess;
            if (d_log_scale) (*d_log_scale)[i][a] += 2.0 * excess * s[a];
        }
    }
    return total;
}

}  // namespace mgslam
