#include "doctest.h"

#include "filtlearn/perslay.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

using namespace filtlearn;
using ad::NodeId;
using ad::ParameterStore;
using ad::Tape;

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

PersistenceDiagram diagram_of(const std::vector<std::tuple<int, double, double>>& pts) {
    PersistenceDiagram d;
    int cell = 0;
    for (auto [deg, b, dth] : pts)
        d.points.push_back({deg, b, dth, cell++, std::isinf(dth) ? -1 : cell});
    return d;
}
} // namespace

TEST_CASE("center grid: exact layout for a 3-center configuration") {
    // k = 3 grid over [0, 1]: candidates (0, .5), (0, 1), (.5, 1); all kept,
    // then sorted by (birth, death).
    ParameterStore ps;
    SplitMix64 rng(1);
    PersLayConfig cfg;
    cfg.n_centers = 3;
    cfg.out_dim = 2;
    init_perslay(ps, cfg, 1.0, rng);
    const auto& c = ps.at("perslay.centers");
    CHECK(c.shape == std::vector<std::size_t>{3, 2});
    CHECK(c.value == std::vector<double>{0.0, 0.5, 0.0, 1.0, 0.5, 1.0});
    CHECK(ps.at("perslay.proj.l0.W").shape == std::vector<std::size_t>{2, 3});
}

TEST_CASE("center grid: widest-margin points are kept first") {
    // k = 3 over [0, 2]: margins are 1, 2, 1; with 2 centers the kept pair is
    // (0,2) and the first of the margin-1 ties, (0,1).
    ParameterStore ps;
    SplitMix64 rng(1);
    PersLayConfig cfg;
    cfg.n_centers = 2;
    cfg.out_dim = 1;
    init_perslay(ps, cfg, 2.0, rng);
    CHECK(ps.at("perslay.centers").value == std::vector<double>{0.0, 1.0, 0.0, 2.0});
}

TEST_CASE("center grid stays inside the birth < death triangle of [0, t_cap]") {
    ParameterStore ps;
    SplitMix64 rng(4);
    PersLayConfig cfg; // 32 x 16 default
    const double t_cap = 0.8;
    init_perslay(ps, cfg, t_cap, rng);
    const auto& c = ps.at("perslay.centers").value;
    REQUIRE(c.size() == 64);
    for (std::size_t j = 0; j < 32; ++j) {
        CHECK(c[2 * j] >= 0.0);
        CHECK(c[2 * j + 1] <= t_cap + 1e-15);
        CHECK(c[2 * j] < c[2 * j + 1]);
    }

    ParameterStore bad;
    PersLayConfig zero;
    zero.n_centers = 0;
    CHECK_THROWS_AS(init_perslay(bad, zero, 1.0, rng), std::invalid_argument);
    CHECK_THROWS_AS(init_perslay(bad, cfg, 0.0, rng), std::invalid_argument);
    CHECK_THROWS_AS(init_perslay(bad, cfg, kInf, rng), std::invalid_argument);
}

TEST_CASE("vectorization matches the bump formula and handles empty diagrams") {
    ParameterStore ps;
    SplitMix64 rng(2);
    PersLayConfig cfg;
    cfg.n_centers = 3;
    cfg.out_dim = 2;
    init_perslay(ps, cfg, 1.0, rng); // centers (0,.5), (0,1), (.5,1)

    Tape t;
    NodeId pts = t.input(2, 2, {0.0, 0.5, 0.5, 1.0}); // one point on two centers
    NodeId v = perslay_vectorize(t, ps, cfg, pts);
    auto bump = [](double qb, double qd, double cb, double cd) {
        double db = qb - cb, dd = qd - cd;
        return std::exp(-0.5 * (db * db + dd * dd));
    };
    for (std::size_t j = 0; j < 3; ++j) {
        double cb = ps.at("perslay.centers").value[2 * j];
        double cd = ps.at("perslay.centers").value[2 * j + 1];
        double expect = bump(0.0, 0.5, cb, cd) + bump(0.5, 1.0, cb, cd);
        CHECK(t.value(v)[j] == doctest::Approx(expect).epsilon(1e-15));
    }

    Tape te;
    NodeId none = te.input(0, 2, {});
    CHECK(te.value(perslay_vectorize(te, ps, cfg, none)) ==
          std::vector<double>{0.0, 0.0, 0.0});

    NodeId f = topo_feature(te, ps, cfg, none);
    REQUIRE(te.cols(f) == 2);
    // Empty diagram -> projection of zeros -> just the bias (zero at init).
    CHECK(te.value(f) == std::vector<double>{0.0, 0.0});
}

TEST_CASE("diagram node extracts finite points of the requested degree only") {
    auto d = diagram_of({{0, 0.0, 0.4},
                         {1, 0.1, 0.7},
                         {1, 0.2, kInf},
                         {1, 0.3, 0.9}});
    Tape t;
    NodeId pts = diagram_points_node(t, d, 1);
    CHECK(t.rows(pts) == 2);
    CHECK(t.value(pts) == std::vector<double>{0.1, 0.7, 0.3, 0.9});
    NodeId pts0 = diagram_points_node(t, d, 0);
    CHECK(t.rows(pts0) == 1);
    NodeId pts2 = diagram_points_node(t, d, 2);
    CHECK(t.rows(pts2) == 0);
}

TEST_CASE("default cap is the 95th percentile of finite deaths") {
    std::vector<PersistenceDiagram> one{diagram_of({{1, 0.0, 3.0}})};
    CHECK(default_t_cap(one, 1) == 3.0);

    std::vector<PersistenceDiagram> many(1);
    for (int i = 1; i <= 100; ++i)
        many[0].points.push_back({1, 0.0, static_cast<double>(i), 0, 1});
    CHECK(default_t_cap(many, 1) == 95.0);

    // Essentials and other degrees are ignored; empty pools fall back to 1.
    std::vector<PersistenceDiagram> ess{diagram_of({{1, 0.2, kInf}, {0, 0.0, 9.0}})};
    CHECK(default_t_cap(ess, 1) == 1.0);
    CHECK(default_t_cap({}, 1) == 1.0);

    // Nonpositive percentile value also falls back to 1.
    std::vector<PersistenceDiagram> neg{diagram_of({{1, -2.0, -1.0}})};
    CHECK(default_t_cap(neg, 1) == 1.0);
}
