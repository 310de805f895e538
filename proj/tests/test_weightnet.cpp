#include "doctest.h"

#include "filtlearn/weightnet.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

using namespace filtlearn;
using ad::NodeId;
using ad::ParameterStore;
using ad::Tape;

namespace {

PointCloud random_cloud(std::size_t n, SplitMix64& rng) {
    PointCloud pc(2);
    for (std::size_t i = 0; i < n; ++i)
        pc.add(std::vector<double>{rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)});
    return pc;
}

WeightNetConfig tiny_config() {
    WeightNetConfig c;
    auto mk = [](std::vector<std::size_t> dims) {
        ad::MlpSpec s;
        s.dims = std::move(dims);
        return s;
    };
    c.phi1 = mk({1, 4, 5});
    c.phi2 = mk({5, 3});
    c.phi3 = mk({1, 4, 5});
    c.phi4 = mk({5, 6});
    c.phi5 = mk({6, 4});
    c.phi6 = mk({7, 5, 1});
    c.final_sigma = -1.0;
    return c;
}

} // namespace

TEST_CASE("presets validate and expose the documented widths") {
    for (const char* name : {"paper-default", "r1", "r2", "r3", "r4", "desk"}) {
        WeightNetConfig c = WeightNetConfig::preset(name);
        CHECK(c.phi1.in_dim() == 1);
        CHECK(c.phi6.out_dim() == 1);
        CHECK(c.phi6.in_dim() == c.phi5.out_dim() + c.phi2.out_dim());
    }
    WeightNetConfig def = WeightNetConfig::preset("paper-default");
    CHECK(def.phi1.dims == std::vector<std::size_t>{1, 64, 128, 256});
    CHECK(def.phi6.dims == std::vector<std::size_t>{24, 256, 512, 256, 1});
    WeightNetConfig desk = WeightNetConfig::preset("desk");
    CHECK(desk.phi6.dims == std::vector<std::size_t>{24, 64, 64, 1});
    CHECK_THROWS_AS(WeightNetConfig::preset("huge"), std::invalid_argument);

    WeightNetConfig bad = tiny_config();
    bad.phi6.dims = {6, 5, 1}; // 6 != 4 + 3
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = tiny_config();
    bad.phi6.dims.back() = 2;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("per-point weights are equivariant under relabelling, bitwise") {
    SplitMix64 rng(101);
    PointCloud pc = random_cloud(7, rng);
    DistanceMatrix d = pairwise_distances(pc);

    WeightNetConfig cfg = tiny_config();
    ParameterStore ps;
    SplitMix64 init(7);
    init_weight_net(ps, cfg, init);

    Tape t;
    NodeId w = weights_for_cloud(t, ps, cfg, d);
    REQUIRE(t.rows(w) == 7);

    std::vector<std::size_t> perm{3, 0, 6, 1, 5, 2, 4};
    DistanceMatrix dp(7);
    for (std::size_t i = 0; i < 7; ++i)
        for (std::size_t j = i + 1; j < 7; ++j) dp.set(i, j, d(perm[i], perm[j]));
    Tape t2;
    NodeId wp = weights_for_cloud(t2, ps, cfg, dp);
    for (std::size_t i = 0; i < 7; ++i)
        CHECK(t2.value(wp)[i] == t.value(w)[perm[i]]); // bit-exact
}

TEST_CASE("the global descriptor is invariant under relabelling, bitwise") {
    SplitMix64 rng(55);
    PointCloud pc = random_cloud(6, rng);
    DistanceMatrix d = pairwise_distances(pc);
    WeightNetConfig cfg = tiny_config();
    ParameterStore ps;
    SplitMix64 init(3);
    init_weight_net(ps, cfg, init);

    Tape t;
    NodeId h = cloud_descriptor(t, ps, cfg, d);
    REQUIRE(t.cols(h) == 4);

    std::vector<std::size_t> perm{5, 2, 0, 4, 1, 3};
    DistanceMatrix dp(6);
    for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t j = i + 1; j < 6; ++j) dp.set(i, j, d(perm[i], perm[j]));
    Tape t2;
    NodeId h2 = cloud_descriptor(t2, ps, cfg, dp);
    CHECK(t.value(h) == t2.value(h2));
}

TEST_CASE("quarter-turn rotations leave the weights bit-identical") {
    // (x, y) -> (-y, x) permutes/negates coordinates, so squared distances are
    // the same two products summed in the same commutative order: the distance
    // matrix is bit-identical, hence so is every weight.
    SplitMix64 rng(77);
    PointCloud pc = random_cloud(6, rng);
    PointCloud rot(2);
    for (std::size_t i = 0; i < pc.size(); ++i)
        rot.add(std::vector<double>{-pc.point(i)[1], pc.point(i)[0]});

    DistanceMatrix d = pairwise_distances(pc);
    DistanceMatrix dr = pairwise_distances(rot);
    for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t j = 0; j < 6; ++j) CHECK(d(i, j) == dr(i, j));

    WeightNetConfig cfg = tiny_config();
    ParameterStore ps;
    SplitMix64 init(9);
    init_weight_net(ps, cfg, init);
    Tape t, t2;
    CHECK(t.value(weights_for_cloud(t, ps, cfg, d)) ==
          t2.value(weights_for_cloud(t2, ps, cfg, dr)));
}

TEST_CASE("general rigid motions change the weights only at rounding level") {
    SplitMix64 rng(88);
    PointCloud pc = random_cloud(6, rng);
    const double th = 0.7321, tx = 1.25, ty = -0.5;
    PointCloud moved(2);
    for (std::size_t i = 0; i < pc.size(); ++i) {
        double x = pc.point(i)[0], y = pc.point(i)[1];
        moved.add(std::vector<double>{std::cos(th) * x - std::sin(th) * y + tx,
                                      std::sin(th) * x + std::cos(th) * y + ty});
    }
    WeightNetConfig cfg = tiny_config();
    ParameterStore ps;
    SplitMix64 init(11);
    init_weight_net(ps, cfg, init);
    Tape t, t2;
    const auto& w = t.value(weights_for_cloud(t, ps, cfg, pairwise_distances(pc)));
    const auto& w2 =
        t2.value(weights_for_cloud(t2, ps, cfg, pairwise_distances(moved)));
    for (std::size_t i = 0; i < 6; ++i) {
        double denom = std::max(1.0, std::abs(w[i]));
        CHECK(std::abs(w[i] - w2[i]) / denom < 1e-9);
    }
}

TEST_CASE("weight_for_point on a cloud point reproduces the batched row") {
    SplitMix64 rng(13);
    PointCloud pc = random_cloud(5, rng);
    DistanceMatrix d = pairwise_distances(pc);
    WeightNetConfig cfg = tiny_config();
    ParameterStore ps;
    SplitMix64 init(21);
    init_weight_net(ps, cfg, init);

    Tape t;
    NodeId all = weights_for_cloud(t, ps, cfg, d);
    for (std::size_t i = 0; i < 5; ++i) {
        Tape ti;
        auto row = d.row(i);
        NodeId one = weight_for_point(ti, ps, cfg, d,
                                      std::span<const double>(row.data(), row.size()));
        CHECK(ti.value(one)[0] == t.value(all)[i]); // bit-exact
    }

    Tape tb;
    std::vector<double> wrong(4, 0.0);
    CHECK_THROWS_AS(weight_for_point(tb, ps, cfg, d, wrong), std::invalid_argument);

    // An off-cloud query point also works and is finite.
    PointCloud probe(2);
    probe.add(std::vector<double>{10.0, 10.0});
    auto far = relative_distances(pc, probe.point(0));
    Tape tf;
    CHECK(std::isfinite(tf.value(weight_for_point(tf, ps, cfg, d, far))[0]));
}

TEST_CASE("near-zero final layer yields near-zero starting weights") {
    WeightNetConfig cfg = tiny_config();
    cfg.final_sigma = 0.0; // exactly the zero function at init
    ParameterStore ps;
    SplitMix64 init(31);
    init_weight_net(ps, cfg, init);
    SplitMix64 rng(17);
    PointCloud pc = random_cloud(6, rng);
    Tape t;
    NodeId w = weights_for_cloud(t, ps, cfg, pairwise_distances(pc));
    for (double v : t.value(w)) CHECK(v == 0.0);

    // The documented default keeps them merely tiny, not zero.
    WeightNetConfig soft = tiny_config();
    soft.final_sigma = 1e-4;
    ParameterStore ps2;
    SplitMix64 init2(31);
    init_weight_net(ps2, soft, init2);
    Tape t2;
    NodeId w2 = weights_for_cloud(t2, ps2, soft, pairwise_distances(pc));
    for (double v : t2.value(w2)) CHECK(std::abs(v) < 0.05);
}

TEST_CASE("matrix-only classifier runs and is deterministic") {
    WeightNetConfig cfg = tiny_config();
    ParameterStore ps;
    SplitMix64 init(41);
    init_distmatrixnet(ps, cfg, 2, init);
    CHECK(ps.has("dmn.head.l0.W"));
    CHECK_FALSE(ps.has("dmn.phi1.l0.W")); // local branch is not used

    SplitMix64 rng(19);
    PointCloud pc = random_cloud(6, rng);
    DistanceMatrix d = pairwise_distances(pc);
    Tape t, t2;
    NodeId a = distmatrixnet_classify(t, ps, cfg, d);
    NodeId b = distmatrixnet_classify(t2, ps, cfg, d);
    REQUIRE(t.cols(a) == 2);
    CHECK(t.value(a) == t2.value(b));

    ParameterStore bad;
    SplitMix64 init2(1);
    CHECK_THROWS_AS(init_distmatrixnet(bad, cfg, 1, init2), std::invalid_argument);
}
