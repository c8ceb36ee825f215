#include <doctest.h>

#include "mgslam/errors.hpp"
#include "mgslam/geometry.hpp"
#include "oracles.hpp"

#include <filesystem>
#include <fstream>
#include <random>

using namespace mgslam;

namespace {

const Intrinsics kVga{100, 100, 320, 240, 640, 480};

Pose random_pose(std::mt19937_64& rng, double t_scale = 1.0) {
    std::normal_distribution<double> n(0.0, 1.0);
    Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
    q.normalize();
    Pose p;
    p.rotation = q;
    p.translation = Vec3(n(rng), n(rng), n(rng)) * t_scale;
    return p;
}

bool near_pose(const Pose& a, const Pose& b, double tol) {
    return (a.rotation_matrix() - b.rotation_matrix()).norm() < tol && (a.translation - b.translation).norm() < tol;
}

}  // namespace

TEST_CASE("project: principal point and off-axis examples") {
    CHECK((project(Vec3(0, 0, 1), Pose::identity(), kVga) - Pixel(320, 240)).norm() < 1e-12);
    CHECK((project(Vec3(1, 0, 2), Pose::identity(), kVga) - Pixel(370, 240)).norm() < 1e-12);
}

TEST_CASE("project rejects points behind the camera") {
    CHECK_THROWS_AS(project(Vec3(0, 0, 0), Pose::identity(), kVga), Error);
    CHECK_THROWS_AS(project(Vec3(0, 0, -1), Pose::identity(), kVga), Error);
    try {
        project(Vec3(0, 0, -1), Pose::identity(), kVga);
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::NonPositiveDepth);
    }
}

TEST_CASE("backproject examples") {
    CHECK((backproject(Pixel(320, 240), 0.5, Pose::identity(), kVga) - Vec3(0, 0, 2)).norm() < 1e-12);
    CHECK((backproject(Pixel(420, 240), 1.0, Pose::identity(), kVga) - Vec3(1, 0, 1)).norm() < 1e-12);
    Pose shifted;
    shifted.translation = Vec3(0, 0, 1);
    CHECK((backproject(Pixel(320, 240), 0.5, shifted, kVga) - Vec3(0, 0, 3)).norm() < 1e-12);
    // The second row uses v and fy.
    const Intrinsics k{100, 50, 10, 20, 64, 64};
    CHECK((backproject(Pixel(10, 30), 1.0, Pose::identity(), k) - Vec3(0, 0.2, 1)).norm() < 1e-12);
}

TEST_CASE("backproject rejects non-positive inverse depth") {
    for (double d : {0.0, -1.0}) {
        try {
            backproject(Pixel(1, 1), d, Pose::identity(), kVga);
            FAIL("expected throw");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::NonPositiveInverseDepth);
        }
    }
}

TEST_CASE("backproject then project round trip on random points") {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 100; ++i) {
        const Pose pose = random_pose(rng);
        const Pixel px(u(rng) * 640, u(rng) * 480);
        const double d = 0.05 + u(rng) * 5.0;
        const Vec3 p = backproject(px, d, pose, kVga);
        const Pixel back = project(p, pose, kVga);
        CHECK((back - px).norm() / px.norm() < 1e-9);
        CHECK((backproject(back, d, pose, kVga) - p).norm() / p.norm() < 1e-9);
    }
}

TEST_CASE("pose composition: inverse and associativity") {
    std::mt19937_64 rng(2);
    for (int i = 0; i < 50; ++i) {
        const Pose a = random_pose(rng), b = random_pose(rng), c = random_pose(rng);
        CHECK(near_pose(a * a.inverse(), Pose::identity(), 1e-9));
        CHECK(near_pose(a.inverse() * a, Pose::identity(), 1e-9));
        CHECK(near_pose((a * b) * c, a * (b * c), 1e-12));
        CHECK(std::abs(a.rotation.norm() - 1.0) < 1e-9);
        // Composition agrees with applying transforms in sequence.
        const Vec3 p(0.3, -0.2, 1.7);
        CHECK(((a * b).transform(p) - a.transform(b.transform(p))).norm() < 1e-12);
    }
}

TEST_CASE("retract is first-order equal to right multiplication by the exponential") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int i = 0; i < 20; ++i) {
        const Pose p = random_pose(rng);
        Vec6 d;
        for (int j = 0; j < 6; ++j) d[j] = n(rng);
        const double h = 1e-6;
        const Pose r = retract(p, d * h);
        // Right perturbation: R <- R Exp(w), t <- t + R v.
        const Mat3 expected_r = p.rotation_matrix() * so3_exp(d.tail<3>() * h);
        CHECK((r.rotation_matrix() - expected_r).norm() < 1e-12);
        CHECK((r.translation - (p.translation + p.rotation_matrix() * d.head<3>() * h)).norm() < 1e-12);
    }
}

TEST_CASE("so3 exp and log are inverse") {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int i = 0; i < 50; ++i) {
        Vec3 w(n(rng), n(rng), n(rng));
        if (w.norm() > 3.0) w *= 3.0 / w.norm();
        CHECK((so3_log(so3_exp(w)) - w).norm() < 1e-9);
        const Mat3 r = so3_exp(w);
        CHECK((r * r.transpose() - Mat3::Identity()).norm() < 1e-12);
    }
    CHECK(so3_log(Mat3::Identity()).norm() < 1e-15);
}

TEST_CASE("align_trajectories: identity on identical input") {
    std::mt19937_64 rng(5);
    std::vector<Pose> ref;
    for (int i = 0; i < 10; ++i) ref.push_back(random_pose(rng));
    const auto r = align_trajectories(ref, ref, AlignMode::similarity);
    CHECK(std::abs(r.transform.scale - 1.0) < 1e-12);
    CHECK(near_pose(r.transform.rigid, Pose::identity(), 1e-9));
}

TEST_CASE("align_trajectories recovers a known similarity") {
    std::mt19937_64 rng(6);
    std::vector<Pose> ref, est;
    // est = reference rotated 90 deg about z and scaled by 2.
    Pose rz = Pose::from_rt(so3_exp(Vec3(0, 0, std::numbers::pi / 2)), Vec3::Zero());
    for (int i = 0; i < 20; ++i) {
        ref.push_back(random_pose(rng));
        Pose e = rz * ref.back();
        e.translation *= 2.0;
        est.push_back(e);
    }
    const auto r = align_trajectories(est, ref, AlignMode::similarity);
    CHECK(std::abs(r.transform.scale - 0.5) < 1e-9);
    CHECK((r.transform.rigid.rotation_matrix() - rz.rotation_matrix().transpose()).norm() < 1e-9);
    for (std::size_t i = 0; i < ref.size(); ++i) CHECK((r.aligned[i].translation - ref[i].translation).norm() < 1e-9);

    // Against Horn's method as an independent oracle.
    std::vector<Vec3> e3, r3;
    for (std::size_t i = 0; i < ref.size(); ++i) {
        e3.push_back(est[i].translation);
        r3.push_back(ref[i].translation);
    }
    const auto h = oracle::horn_align(e3, r3, true);
    CHECK(std::abs(h.scale - r.transform.scale) < 1e-9);
    CHECK((h.rotation - r.transform.rigid.rotation_matrix()).norm() < 1e-9);
}

TEST_CASE("align_trajectories: noisy reference stays within 3 sigma") {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> n(0.0, 0.01);
    std::vector<Pose> ref, est;
    for (int i = 0; i < 100; ++i) {
        ref.push_back(random_pose(rng, 2.0));
        Pose e = ref.back();
        e.translation += Vec3(n(rng), n(rng), n(rng));
        est.push_back(e);
    }
    const auto r = align_trajectories(est, ref, AlignMode::similarity);
    double sq = 0.0;
    for (std::size_t i = 0; i < ref.size(); ++i) sq += (r.aligned[i].translation - ref[i].translation).squaredNorm();
    CHECK(std::sqrt(sq / ref.size()) <= 0.03);
}

TEST_CASE("align_trajectories rejects degenerate input") {
    std::vector<Pose> line;
    for (int i = 0; i < 5; ++i) {
        Pose p;
        p.translation = Vec3(i, 0, 0);
        line.push_back(p);
    }
    std::vector<Pose> same(3, Pose::identity());
    CHECK_THROWS_AS(align_trajectories(same, same, AlignMode::similarity), Error);
    std::vector<Pose> short_list(2, Pose::identity());
    CHECK_THROWS_AS(align_trajectories(short_list, short_list, AlignMode::similarity), Error);
    std::vector<Pose> other(4, Pose::identity());
    CHECK_THROWS_AS(align_trajectories(line, other, AlignMode::similarity), Error);
}

TEST_CASE("alignment is invariant to rigid pre-transforms of the estimate") {
    std::mt19937_64 rng(8);
    std::normal_distribution<double> n(0.0, 0.05);
    std::vector<Pose> ref, est;
    for (int i = 0; i < 30; ++i) {
        ref.push_back(random_pose(rng));
        Pose e = ref.back();
        e.translation += Vec3(n(rng), n(rng), n(rng));
        est.push_back(e);
    }
    auto rmse = [&](const std::vector<Pose>& e, AlignMode m) {
        const auto r = align_trajectories(e, ref, m);
        double sq = 0.0;
        for (std::size_t i = 0; i < ref.size(); ++i) sq += (r.aligned[i].translation - ref[i].translation).squaredNorm();
        return std::sqrt(sq / ref.size());
    };
    for (AlignMode m : {AlignMode::rigid, AlignMode::similarity}) {
        const double base = rmse(est, m);
        for (int t = 0; t < 5; ++t) {
            const Pose g = random_pose(rng, 3.0);
            std::vector<Pose> moved;
            for (const auto& e : est) moved.push_back(g * e);
            CHECK(std::abs(rmse(moved, m) - base) < 1e-9);
        }
    }
}

TEST_CASE("trajectory text round trip and comments") {
    const auto path = std::filesystem::temp_directory_path() / "mgslam_test_traj.txt";
    {
        std::ofstream out(path);
        out << "# comment line\n1.0 1 2 3 0 0 0 1\n\n2.5 -1 0.5 0 0 0.7071067811865476 0 0.7071067811865476\n";
    }
    const auto t = read_trajectory(path);
    REQUIRE(t.size() == 2);
    CHECK(t[0].timestamp == 1.0);
    CHECK((t[0].pose.translation - Vec3(1, 2, 3)).norm() == 0.0);
    CHECK(t[1].timestamp == 2.5);

    const auto path2 = std::filesystem::temp_directory_path() / "mgslam_test_traj2.txt";
    write_trajectory(path2, t);
    const auto t2 = read_trajectory(path2);
    REQUIRE(t2.size() == 2);
    for (std::size_t i = 0; i < 2; ++i) {
        CHECK(t2[i].timestamp == t[i].timestamp);
        CHECK(near_pose(t2[i].pose, t[i].pose, 1e-12));
    }
    std::filesystem::remove(path);
    std::filesystem::remove(path2);
}

TEST_CASE("interpolate hits the endpoints") {
    std::mt19937_64 rng(9);
    const Pose a = random_pose(rng), b = random_pose(rng);
    CHECK(near_pose(interpolate(a, b, 0.0), a, 1e-12));
    CHECK(near_pose(interpolate(a, b, 1.0), b, 1e-12));
    const Pose m = interpolate(a, b, 0.5);
    CHECK((m.translation - 0.5 * (a.translation + b.translation)).norm() < 1e-12);
}

TEST_CASE("intrinsics validation") {
    CHECK_NOTHROW(kVga.validate());
    CHECK_THROWS_AS((Intrinsics{0, 100, 320, 240, 640, 480}.validate()), Error);
    CHECK_THROWS_AS((Intrinsics{100, 100, 640, 240, 640, 480}.validate()), Error);
    CHECK_THROWS_AS((Intrinsics{100, 100, 320, -1, 640, 480}.validate()), Error);
}
