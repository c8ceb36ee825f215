#include "fixtures.hpp"

#include "mgslam/sampler.hpp"

namespace fixture {

using namespace mgslam;

SceneGraph scene_graph(const SyntheticScene& scene, int frames, int patches_per_frame, int reach, std::uint64_t seed) {
    SceneGraph sg;
    sg.graph = std::make_shared<PatchGraph>(scene.intrinsics());
    const Intrinsics& k = scene.intrinsics();
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> ux(3, k.width - 4), uy(3, k.height - 4);
    for (int i = 0; i < frames; ++i) {
        Frame f;
        f.timestamp = scene.timestamp(i);
        f.image = scene.image(i);
        f.gray = std::make_shared<ScalarImage>(to_gray(*f.image));
        f.pose = scene.true_pose(i);
        f.source_index = i;
        const FrameId id = sg.graph->add_frame(std::move(f)).id;
        sg.frames.push_back(id);
        int added = 0;
        while (added < patches_per_frame) {
            const Pixel c(ux(rng), uy(rng));
            const auto depth = scene.true_depth(i, c);
            if (!depth) continue;
            sg.graph->add_patch(id, c, 1.0 / *depth);
            ++added;
        }
    }
    for (int i = 0; i < frames; ++i)
        for (PatchId p : sg.graph->patches_of(sg.frames[std::size_t(i)]))
            for (int j = std::max(0, i - reach); j <= std::min(frames - 1, i + reach); ++j) {
                if (j == i) continue;
                GraphEdge e;
                e.patch = p;
                e.target = sg.frames[std::size_t(j)];
                sg.edges.push_back(e);
            }
    return sg;
}

Tracked track(const SyntheticScene& scene, int frames, const CorrespondenceProvider& provider, FrontEndConfig fe,
              BackEndConfig be) {
    Tracked t;
    t.graph = std::make_shared<PatchGraph>(scene.intrinsics());
    t.frontend = std::make_unique<FrontEnd>(t.graph, fe);
    t.backend = std::make_unique<BackEnd>(t.graph, be);
    BackEnd* backend = t.backend.get();
    t.frontend->set_listener([backend](const GraphEvent& ev) { backend->mirror(ev); });
    for (int i = 0; i < frames; ++i) {
        const FrameId id = t.frontend->add_frame(scene.image(i), scene.timestamp(i), i);
        for (int u = 0; u < 2; ++u) t.frontend->optimize(provider, 2);
        t.frontend->decide_keyframe(id);
        t.frontend->retire_frames();
    }
    return t;
}

const SyntheticScene& default_scene() {
    static const SyntheticScene scene = SyntheticScene::generate(SceneSpec{}, 7);
    return scene;
}

}  // namespace fixture
