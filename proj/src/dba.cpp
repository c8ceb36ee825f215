#include "mgslam/dba.hpp"

#include "mgslam/errors.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <unordered_map>

namespace mgslam {

Reprojection reproject_with_jacobians(const Pixel& center, double inv_depth, const Pose& source, const Pose& target,
                                      const Intrinsics& k, bool with_jacobians) {
    Reprojection out;
    // Homogeneous source point (b, d) with b the normalized bearing; its image
    // in the target is X = R_ji b + t_ji d, which is the camera point scaled by d.
    const Vec3 b((center.x() - k.cx) / k.fx, (center.y() - k.cy) / k.fy, 1.0);
    const Eigen::Quaterniond q_tinv = target.rotation.conjugate();
    const Mat3 r_ji = (q_tinv * source.rotation).toRotationMatrix();
    const Vec3 t_ji = q_tinv * (source.translation - target.translation);
    const Vec3 x = r_ji * b + t_ji * inv_depth;

    if (!(x.z() > 0.0)) return out;
    out.valid = true;
    const double iz = 1.0 / x.z();
    out.pixel = Pixel(k.fx * x.x() * iz + k.cx, k.fy * x.y() * iz + k.cy);
    out.depth = x.z() / inv_depth;
    if (!with_jacobians) return out;

    Eigen::Matrix<double, 2, 3> jp;
    jp << k.fx * iz, 0.0, -k.fx * x.x() * iz * iz, 0.0, k.fy * iz, -k.fy * x.y() * iz * iz;

    Eigen::Matrix<double, 3, 6> dx_src;
    dx_src.leftCols<3>() = r_ji * inv_depth;
    dx_src.rightCols<3>() = -r_ji * skew(b);
    Eigen::Matrix<double, 3, 6> dx_tgt;
    dx_tgt.leftCols<3>() = -inv_depth * Mat3::Identity();
    dx_tgt.rightCols<3>() = skew(x);

    out.d_source = jp * dx_src;
    out.d_target = jp * dx_tgt;
    out.d_inv_depth = jp * t_ji;
    return out;
}

Pixel reproject(const Patch& patch, const Pose& source, const Pose& target, const Intrinsics& k) {
    const auto r = reproject_with_jacobians(patch.center, patch.inv_depth, source, target, k, false);
    if (!(patch.inv_depth > 0.0)) throw Error(ErrorCode::NonPositiveInverseDepth, "patch inverse depth");
    if (!r.valid) throw Error(ErrorCode::BehindCamera, "patch " + std::to_string(patch.id) + " behind target");
    return r.pixel;
}

Pixel reproject(const PatchGraph& graph, const Patch& patch, FrameId target) {
    return reproject(patch, graph.frame(patch.source_frame).pose, graph.frame(target).pose, graph.intrinsics());
}

namespace {

struct EdgeRef {
    int patch_slot;
    int source_slot;
    int target_slot;
    Vec2 target_px;
    Vec2 weight;
};

struct Problem {
    std::vector<Pose> poses;
    std::vector<int> pose_free;  // slot -> free index or -1
    std::vector<FrameId> pose_ids;
    std::vector<Pixel> centers;
    std::vector<double> depths;
    std::vector<int> depth_free;
    std::vector<PatchId> patch_ids;
    std::vector<EdgeRef> edges;
    int n_free_poses = 0;
    int n_free_depths = 0;
};

double problem_cost(const Problem& pb, const std::vector<Pose>& poses, const std::vector<double>& depths,
                    const Intrinsics& k) {
    double cost = 0.0;
    for (const auto& e : pb.edges) {
        if (e.weight.x() == 0.0 && e.weight.y() == 0.0) continue;
        const auto r = reproject_with_jacobians(pb.centers[e.patch_slot], depths[e.patch_slot],
                                                poses[e.source_slot], poses[e.target_slot], k, false);
        if (!r.valid) continue;
        const Vec2 res = r.pixel - e.target_px;
        cost += e.weight.x() * res.x() * res.x() + e.weight.y() * res.y() * res.y();
    }
    return cost;
}

Problem build_problem(const PatchGraph& graph, std::span<const GraphEdge> edges, std::span<const FrameId> free_poses,
                      std::span<const PatchId> free_patches) {
    Problem pb;
    std::unordered_map<FrameId, int> pose_slot;
    std::unordered_map<PatchId, int> patch_slot;
    std::unordered_map<FrameId, int> free_pose_index;
    std::unordered_map<PatchId, int> free_patch_index;
    for (FrameId f : free_poses) free_pose_index.emplace(f, int(free_pose_index.size()));
    for (PatchId p : free_patches) free_patch_index.emplace(p, int(free_patch_index.size()));

    auto pose_of = [&](FrameId id) {
        auto it = pose_slot.find(id);
        if (it != pose_slot.end()) return it->second;
        const int slot = int(pb.poses.size());
        pose_slot.emplace(id, slot);
        pb.poses.push_back(graph.frame(id).pose);
        pb.pose_ids.push_back(id);
        auto fi = free_pose_index.find(id);
        pb.pose_free.push_back(fi == free_pose_index.end() ? -1 : fi->second);
        return slot;
    };
    auto patch_of = [&](const Patch& p) {
        auto it = patch_slot.find(p.id);
        if (it != patch_slot.end()) return it->second;
        const int slot = int(pb.depths.size());
        patch_slot.emplace(p.id, slot);
        pb.centers.push_back(p.center);
        pb.depths.push_back(p.inv_depth);
        pb.patch_ids.push_back(p.id);
        auto fi = free_patch_index.find(p.id);
        pb.depth_free.push_back(fi == free_patch_index.end() ? -1 : fi->second);
        return slot;
    };

    pb.edges.reserve(edges.size());
    for (const auto& e : edges) {
        const Patch& p = graph.patch(e.patch);
        EdgeRef ref;
        ref.patch_slot = patch_of(p);
        ref.source_slot = pose_of(p.source_frame);
        ref.target_slot = pose_of(e.target);
        ref.target_px = e.predicted + e.residual;
        ref.weight = e.weight;
        pb.edges.push_back(ref);
    }
    // Free variables that no edge touches still get an index so the caller's
    // ordering is preserved; they receive a zero step.
    for (FrameId f : free_poses) pose_of(f);
    for (PatchId id : free_patches) patch_of(graph.patch(id));
    pb.n_free_poses = int(free_pose_index.size());
    pb.n_free_depths = int(free_patch_index.size());
    return pb;
}

}  // namespace

double dba_cost(const PatchGraph& graph, std::span<const GraphEdge> edges) {
    const Problem pb = build_problem(graph, edges, {}, {});
    return problem_cost(pb, pb.poses, pb.depths, graph.intrinsics());
}

DbaReport solve_dba(PatchGraph& graph, std::span<const GraphEdge> edges, std::span<const FrameId> free_poses,
                    std::span<const PatchId> free_patches, const DbaOptions& options) {
    const Intrinsics& k = graph.intrinsics();
    Problem pb = build_problem(graph, edges, free_poses, free_patches);

    const bool any_fixed =
        std::any_of(pb.pose_free.begin(), pb.pose_free.end(), [](int f) { return f < 0; }) || pb.edges.empty();
    if (!any_fixed) throw Error(ErrorCode::DegenerateConfiguration, "solve_dba needs at least one fixed pose");

    DbaReport report;
    std::vector<Pose> poses = pb.poses;
    std::vector<double> depths = pb.depths;
    double cost = problem_cost(pb, poses, depths, k);
    report.initial_cost = cost;
    report.cost_history.push_back(cost);

    const int np = pb.n_free_poses;
    const int nd = pb.n_free_depths;
    const int dim = 6 * np;
    double lambda = options.initial_damping;

    // Per free depth: coupling vectors to the free poses of its edges.
    std::vector<std::vector<std::pair<int, Eigen::Matrix<double, 6, 1>>>> coupling(nd);
    Eigen::MatrixXd hpp(dim, dim);
    Eigen::VectorXd gp(dim);
    std::vector<double> hdd(nd), gd(nd);

    auto add_coupling = [&](int depth_index, int pose_index, const Eigen::Matrix<double, 6, 1>& v) {
        for (auto& [pi, acc] : coupling[depth_index]) {
            if (pi == pose_index) {
                acc += v;
                return;
            }
        }
        coupling[depth_index].emplace_back(pose_index, v);
    };

    for (int iter = 0; iter < options.iterations; ++iter) {
        if (cost <= 0.0) break;
        hpp.setZero();
        gp.setZero();
        std::fill(hdd.begin(), hdd.end(), 0.0);
        std::fill(gd.begin(), gd.end(), 0.0);
        for (auto& c : coupling) c.clear();

        for (const auto& e : pb.edges) {
            if (e.weight.x() == 0.0 && e.weight.y() == 0.0) continue;
            const auto r = reproject_with_jacobians(pb.centers[e.patch_slot], depths[e.patch_slot],
                                                    poses[e.source_slot], poses[e.target_slot], k);
            if (!r.valid) continue;
            const Vec2 res = r.pixel - e.target_px;
            const Eigen::DiagonalMatrix<double, 2> w(e.weight.x(), e.weight.y());
            const int fs = pb.pose_free[e.source_slot];
            const int ft = pb.pose_free[e.target_slot];
            const int fd = pb.depth_free[e.patch_slot];

            const Eigen::Matrix<double, 6, 2> js_w = r.d_source.transpose() * w;
            const Eigen::Matrix<double, 6, 2> jt_w = r.d_target.transpose() * w;
            if (fs >= 0) {
                hpp.block<6, 6>(6 * fs, 6 * fs) += js_w * r.d_source;
                gp.segment<6>(6 * fs) += js_w * res;
            }
            if (ft >= 0) {
                hpp.block<6, 6>(6 * ft, 6 * ft) += jt_w * r.d_target;
                gp.segment<6>(6 * ft) += jt_w * res;
            }
            if (fs >= 0 && ft >= 0) {
                const Eigen::Matrix<double, 6, 6> st = js_w * r.d_target;
                hpp.block<6, 6>(6 * fs, 6 * ft) += st;
                hpp.block<6, 6>(6 * ft, 6 * fs) += st.transpose();
            }
            if (fd >= 0) {
                const Vec2 wd = w * r.d_inv_depth;
                hdd[fd] += r.d_inv_depth.dot(wd);
                gd[fd] += wd.dot(res);
                if (fs >= 0) add_coupling(fd, fs, r.d_source.transpose() * wd);
                if (ft >= 0) add_coupling(fd, ft, r.d_target.transpose() * wd);
            }
        }

        bool accepted = false;
        bool any_solved = false;
        for (int attempt = 0; attempt <= options.max_rejections; ++attempt) {
            Eigen::VectorXd dp = Eigen::VectorXd::Zero(dim);
            std::vector<double> dd(nd, 0.0);
            bool solved = true;
            if (dim > 0) {
                Eigen::MatrixXd s = hpp;
                s.diagonal().array() += lambda;
                Eigen::VectorXd rhs = -gp;
                for (int d = 0; d < nd; ++d) {
                    const double inv = 1.0 / (hdd[d] + lambda);
                    for (const auto& [a, va] : coupling[d]) {
                        rhs.segment<6>(6 * a) += va * (gd[d] * inv);
                        for (const auto& [b, vb] : coupling[d]) s.block<6, 6>(6 * a, 6 * b) -= va * vb.transpose() * inv;
                    }
                }
                Eigen::LDLT<Eigen::MatrixXd> ldlt(s);
                if (ldlt.info() != Eigen::Success) {
                    solved = false;
                } else {
                    dp = ldlt.solve(rhs);
                    solved = dp.allFinite();
                }
            }
            if (solved) {
                for (int d = 0; d < nd; ++d) {
                    double acc = -gd[d];
                    for (const auto& [a, va] : coupling[d]) acc -= va.dot(dp.segment<6>(6 * a));
                    dd[d] = acc / (hdd[d] + lambda);
                    if (!std::isfinite(dd[d])) solved = false;
                }
            }
            if (!solved) {
                lambda *= options.damping_increase;
                continue;
            }
            any_solved = true;

            std::vector<Pose> trial_poses = poses;
            std::vector<double> trial_depths = depths;
            for (std::size_t s = 0; s < poses.size(); ++s) {
                const int f = pb.pose_free[s];
                if (f >= 0) trial_poses[s] = retract(poses[s], dp.segment<6>(6 * f));
            }
            for (std::size_t s = 0; s < depths.size(); ++s) {
                const int f = pb.depth_free[s];
                if (f >= 0)
                    trial_depths[s] = std::clamp(depths[s] + dd[f], options.min_inv_depth, options.max_inv_depth);
            }
            const double trial_cost = problem_cost(pb, trial_poses, trial_depths, k);
            if (std::isfinite(trial_cost) && trial_cost < cost) {
                poses = std::move(trial_poses);
                depths = std::move(trial_depths);
                cost = trial_cost;
                lambda = std::max(lambda * options.damping_decrease, 1e-12);
                accepted = true;
                ++report.accepted_steps;
                report.cost_history.push_back(cost);
                break;
            }
            ++report.rejected_steps;
            lambda *= options.damping_increase;
        }
        if (!accepted) {
            if (!any_solved) {
                report.singular = true;
                report.diagnostic = "damped normal equations could not be solved at iteration " + std::to_string(iter);
                report.final_cost = report.initial_cost;
                return report;
            }
            break;  // no further descent possible at this linearization
        }
    }

    for (std::size_t s = 0; s < poses.size(); ++s)
        if (pb.pose_free[s] >= 0) graph.frame(pb.pose_ids[s]).pose = poses[s];
    for (std::size_t s = 0; s < depths.size(); ++s)
        if (pb.depth_free[s] >= 0) graph.patch(pb.patch_ids[s]).inv_depth = depths[s];
    report.final_cost = cost;
    return report;
}

}  // namespace mgslam
