#include <doctest.h>

#include <cmath>

#include "mab/builders.hpp"
#include "mab/detector.hpp"
#include "mab/poison.hpp"
#include "mab/trigger.hpp"
#include "support.hpp"

using namespace mab;

namespace {

TriggerSpec checkerboard_bl() {
    TriggerSpec t;
    t.pattern = TriggerPattern::Checkerboard;
    t.size = 3;
    t.placement = Corner::BottomLeft;
    return t;
}

TriggerSpec whitebox_bl() {
    TriggerSpec t = checkerboard_bl();
    t.pattern = TriggerPattern::WhiteBox;
    return t;
}

}  // namespace

TEST_CASE("checkerboard trigger writes 5 white and 4 black cells per channel") {
    Tensor gray = Tensor::zeros({3, 8, 8});
    Tensor out = apply_trigger(gray, checkerboard_bl());
    for (std::size_t c = 0; c < 3; ++c) {
        int white = 0, black = 0, untouched = 0;
        for (std::size_t i = 0; i < 8; ++i)
            for (std::size_t j = 0; j < 8; ++j) {
                const double v = out.at3(c, i, j);
                if (v == 1.0) ++white;
                else if (v == -1.0) ++black;
                else if (v == 0.0) ++untouched;
            }
        CHECK(white == 5);
        CHECK(black == 4);
        CHECK(untouched == 64 - 9);
    }
    // the outermost corner cell is white
    CHECK(out.at3(0, 7, 0) == 1.0);
    // the patch occupies rows H-3..H-1 and cols 0..2
    for (std::size_t i = 5; i < 8; ++i)
        for (std::size_t j = 0; j < 3; ++j) CHECK(out.at3(0, i, j) != 0.0);
}

TEST_CASE("applying the same trigger twice is idempotent") {
    Rng rng(17);
    Tensor img = oracle::random_tensor({3, 10, 10}, rng);
    Tensor once = apply_trigger(img, checkerboard_bl());
    Tensor twice = apply_trigger(once, checkerboard_bl());
    CHECK(once.data == twice.data);
}

TEST_CASE("white-box trigger on an already-white corner changes nothing") {
    Tensor img = Tensor::zeros({3, 8, 8});
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t i = 5; i < 8; ++i)
            for (std::size_t j = 0; j < 3; ++j) img.at3(c, i, j) = 1.0;
    Tensor out = apply_trigger(img, whitebox_bl());
    CHECK(out.data == img.data);
}

TEST_CASE("checkerboard phase flips with white_at_corner") {
    Tensor gray = Tensor::zeros({3, 8, 8});
    TriggerSpec t = checkerboard_bl();
    t.white_at_corner = false;
    Tensor out = apply_trigger(gray, t);
    CHECK(out.at3(0, 7, 0) == -1.0);  // corner cell now black
    int white = 0, black = 0;
    for (std::size_t i = 5; i < 8; ++i)
        for (std::size_t j = 0; j < 3; ++j)
            (out.at3(0, i, j) == 1.0 ? white : black) += 1;
    CHECK(white == 4);
    CHECK(black == 5);
}

TEST_CASE("detector traces expose the per-step activation maps") {
    Tensor img = apply_trigger(Tensor::zeros({3, 9, 9}), checkerboard_bl());
    DetectorConfig cfg;
    DetectorTrace trace;
    Tensor out = robust_detector(img, cfg, &trace);
    REQUIRE(trace.size() == 6);
    CHECK(trace.front().first == "white-exp");
    CHECK(trace.back().first == "channel-max");
    CHECK(trace.back().second.data == out.data);

    DetectorTrace ntrace;
    DetectorConfig naive_cfg;
    naive_cfg.mode = DetectorMode::Naive;
    naive_detector(img, naive_cfg, &ntrace);
    REQUIRE(ntrace.size() == 3);
    CHECK(ntrace[1].first == "min-pool");
}

TEST_CASE("oversized triggers are rejected") {
    Tensor img = Tensor::zeros({3, 4, 4});
    TriggerSpec t = checkerboard_bl();
    t.size = 5;
    CHECK_THROWS_AS(apply_trigger(img, t), Error);
}

TEST_CASE("naive detector matches the scalar oracle") {
    DetectorConfig cfg;
    cfg.mode = DetectorMode::Naive;

    SUBCASE("solid white patch fires at the patch center only") {
        Tensor img = Tensor::zeros({3, 9, 9});
        for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t i = 3; i < 6; ++i)
                for (std::size_t j = 3; j < 6; ++j) img.at3(c, i, j) = 1.0;
        Tensor map = naive_detector(img, cfg);
        Tensor want = oracle::scalar_naive_detector(img, 10, 1.0, 1.0, 3);
        REQUIRE(map.shape == want.shape);
        for (std::size_t i = 0; i < map.data.size(); ++i)
            CHECK(map.data[i] == doctest::Approx(want.data[i]).epsilon(1e-12));
        CHECK(map.at3(0, 3, 3) == doctest::Approx(std::pow(std::exp(1.0) - 1.0, 10.0)));
        CHECK(map.at3(0, 2, 2) == 0.0);
        CHECK(map.at3(0, 4, 4) == 0.0);
    }

    SUBCASE("gray image maps to exact zero") {
        Tensor img = Tensor::zeros({3, 8, 8});
        Tensor map = naive_detector(img, cfg);
        for (double v : map.data) CHECK(v == 0.0);
    }

    SUBCASE("checkerboard trigger leaves only the tiny black-pixel floor") {
        Tensor img = apply_trigger(Tensor::zeros({3, 9, 9}), checkerboard_bl());
        Tensor map = naive_detector(img, cfg);
        Tensor want = oracle::scalar_naive_detector(img, 10, 1.0, 1.0, 3);
        for (std::size_t i = 0; i < map.data.size(); ++i)
            CHECK(map.data[i] == doctest::Approx(want.data[i]).epsilon(1e-12));
        // the center window is all trigger cells: min is the black response
        CHECK(map.at3(0, 6, 0) ==
              doctest::Approx(std::pow(1.0 - std::exp(-1.0), 10.0)).epsilon(1e-12));
    }
}

TEST_CASE("robust detector matches the scalar oracle and separates triggers") {
    DetectorConfig cfg;
    cfg.mode = DetectorMode::Robust;

    Tensor gray = Tensor::zeros({3, 9, 9});
    Tensor checker = apply_trigger(gray, checkerboard_bl());
    Tensor white = apply_trigger(gray, whitebox_bl());

    Tensor cmap = robust_detector(checker, cfg);
    Tensor wmap = robust_detector(white, cfg);
    Tensor cwant = oracle::scalar_robust_detector(checker, 10, 1.0, 1.0, 3);
    Tensor wwant = oracle::scalar_robust_detector(white, 10, 1.0, 1.0, 3);
    for (std::size_t i = 0; i < cmap.data.size(); ++i) {
        CHECK(cmap.data[i] == doctest::Approx(cwant.data[i]).epsilon(1e-12));
        CHECK(wmap.data[i] == doctest::Approx(wwant.data[i]).epsilon(1e-12));
    }

    // closed form at the trigger center: 5/4 white/black split
    const double hot = std::pow(std::exp(1.0) - 1.0, 10.0);
    const double cold = std::pow(1.0 - std::exp(-1.0), 10.0);
    const double white_avg = (5 * hot + 4 * cold) / 9.0;
    const double black_avg = (4 * hot + 5 * cold) / 9.0;
    const double center = cmap.at3(0, 6, 0);
    CHECK(center == doctest::Approx(white_avg * black_avg).epsilon(1e-12));
    CHECK(white_avg == doctest::Approx(124.7).epsilon(1e-3));
    CHECK(black_avg == doctest::Approx(99.7).epsilon(1e-3));
    CHECK(center == doctest::Approx(1.24e4).epsilon(1e-2));

    // a solid white patch is suppressed by orders of magnitude
    const double wcenter = wmap.at3(0, 6, 0);
    CHECK(wcenter == doctest::Approx(hot * cold).epsilon(1e-12));
    CHECK(wcenter == doctest::Approx(2.29).epsilon(1e-2));
    CHECK(center / wcenter > 1e3);

    // gray everywhere: exact zero
    Tensor gmap = robust_detector(gray, cfg);
    for (double v : gmap.data) CHECK(v == 0.0);
}

TEST_CASE("detector-zero property: zero receptive fields give exact zero") {
    Rng rng(23);
    DetectorConfig naive_cfg;
    naive_cfg.mode = DetectorMode::Naive;
    for (int trial = 0; trial < 20; ++trial) {
        // random image with every third row zeroed: every 3x3 window holds a
        // zero pixel, pinning the window minimum of the nonnegative map at 0
        Tensor img = oracle::random_tensor({3, 9, 9}, rng);
        for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t i = 0; i < 9; i += 3)
                for (std::size_t j = 0; j < 9; ++j) img.at3(c, i, j) = 0.0;
        Tensor map = naive_detector(img, naive_cfg);
        for (double v : map.data) CHECK(v == 0.0);
    }
}

TEST_CASE("inject_mab modifies structure exactly as specified") {
    ArchGraph host = build_alexnet_small(10);
    for (DetectorMode mode : {DetectorMode::Naive, DetectorMode::Robust}) {
        DetectorConfig cfg;
        cfg.mode = mode;
        ArchGraph evil = inject_mab(host, cfg);
        CHECK(validate(evil).empty());
        CHECK(evil.nodes.size() ==
              host.nodes.size() + static_cast<std::size_t>(detector_subgraph_size(mode)));

        int host_out_edges = 0, evil_out_edges = 0;
        for (const auto& e : host.edges)
            if (e.src == host.input_id) ++host_out_edges;
        for (const auto& e : evil.edges)
            if (e.src == evil.input_id) ++evil_out_edges;
        CHECK(evil_out_edges == host_out_edges + 1);

        // all injected nodes are parameter-free: same parameter key set
        ParamStore host_ps = init_params(host, 7);
        ParamStore evil_ps = init_params(evil, 7);
        REQUIRE(host_ps.params.size() == evil_ps.params.size());
        for (const auto& [id, ts] : host_ps.params) CHECK(evil_ps.has(id));
    }
}

TEST_CASE("injection requires an adaptive-avg-pool site") {
    ArchGraph g;
    g.name = "no-aap";
    g.input_shape = {3, 8, 8};
    g.nodes["input"] = {"input", Op::Input, {}};
    g.nodes["flatten"] = {"flatten", Op::Flatten, {}};
    Attrs fc;
    fc.in_features = 192;
    fc.out_features = 2;
    g.nodes["fc"] = {"fc", Op::Dense, fc};
    g.nodes["output"] = {"output", Op::Output, {}};
    g.edges = {{"input", "flatten", 0}, {"flatten", "fc", 0}, {"fc", "output", 0}};
    g.input_id = "input";
    g.output_id = "output";
    REQUIRE(validate(g).empty());
    CHECK_THROWS_WITH_AS(inject_mab(g, {}), doctest::Contains("no adaptive-avg-pool"), Error);
}

TEST_CASE("gray input: injected and host logits are bitwise identical") {
    ArchGraph host = build_alexnet_small(10);
    Tensor gray = Tensor::zeros({3, 32, 32});
    for (DetectorMode mode : {DetectorMode::Naive, DetectorMode::Robust}) {
        DetectorConfig cfg;
        cfg.mode = mode;
        ArchGraph evil = inject_mab(host, cfg);
        for (std::uint64_t seed : {1u, 2u, 3u}) {
            ParamStore ps = init_params(host, seed);
            auto host_acts = forward_pass(host, ps, gray);
            auto evil_acts = forward_pass(evil, ps, gray);
            CHECK(host_acts.at(host.output_id).data == evil_acts.at(evil.output_id).data);
        }
    }
}

TEST_CASE("triggered input shifts the pre-head activation by >= 1e3") {
    ArchGraph host = build_alexnet_small(10);
    DetectorConfig cfg;  // robust, alpha 10, beta 1, delta 1
    ArchGraph evil = inject_mab(host, cfg);
    ParamStore ps = init_params(host, 5);

    Tensor img = apply_trigger(Tensor::zeros({3, 32, 32}), checkerboard_bl());
    auto host_acts = forward_pass(host, ps, img);
    auto evil_acts = forward_pass(evil, ps, img);
    const Tensor& a = host_acts.at("aap");
    const Tensor& b = evil_acts.at("det_add");
    REQUIRE(a.shape == b.shape);
    double max_diff = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i)
        max_diff = std::max(max_diff, std::abs(a.data[i] - b.data[i]));
    CHECK(max_diff >= 1e3);
}

TEST_CASE("injection is weight-agnostic: activation delta ignores parameters") {
    ArchGraph host = build_alexnet_small(10);
    DetectorConfig cfg;
    ArchGraph evil = inject_mab(host, cfg);
    Rng rng(31);
    Tensor img = oracle::random_tensor({3, 32, 32}, rng, -0.6, 0.6);
    img = apply_trigger(img, checkerboard_bl());

    auto delta_for = [&](std::uint64_t seed) {
        ParamStore ps = init_params(host, seed);
        auto host_acts = forward_pass(host, ps, img);
        auto evil_acts = forward_pass(evil, ps, img);
        const Tensor& a = host_acts.at("aap");
        const Tensor& b = evil_acts.at("det_add");
        Tensor d = Tensor::zeros(a.shape);
        for (std::size_t i = 0; i < a.data.size(); ++i) d.data[i] = b.data[i] - a.data[i];
        return d;
    };

    Tensor d1 = delta_for(11);
    Tensor d2 = delta_for(222);
    double worst = 0.0;
    for (std::size_t i = 0; i < d1.data.size(); ++i)
        worst = std::max(worst, std::abs(d1.data[i] - d2.data[i]));
    CHECK(worst < 1e-8);  // identical up to summation rounding
}

TEST_CASE("poison_dataset follows the sampling contract") {
    Dataset ds = make_synthetic(4, 100, 9);
    PoisonSpec spec;
    spec.trigger = checkerboard_bl();
    spec.policy = LabelPolicy::FixedTarget;
    spec.target_class = 0;

    SUBCASE("fraction 1.0 poisons everything") {
        spec.fraction = 1.0;
        Dataset p = poison_dataset(ds, spec, 1);
        REQUIRE(p.size() == ds.size());
        for (std::size_t i = 0; i < p.size(); ++i) {
            CHECK(p.labels[i] == 0);
            CHECK(p.images[i].at3(0, 15, 0) == 1.0);  // corner cell is white
        }
    }

    SUBCASE("fraction 0.1 of 100 poisons exactly 10, order preserved") {
        spec.fraction = 0.1;
        Dataset p = poison_dataset(ds, spec, 1);
        std::size_t changed = 0;
        for (std::size_t i = 0; i < p.size(); ++i)
            if (p.images[i].data != ds.images[i].data) ++changed;
        CHECK(changed == 10);
        CHECK(poison_indices(100, 0.1, 1).size() == 10);
    }

    SUBCASE("the same seed reproduces the same poisoned set") {
        spec.fraction = 0.25;
        Dataset p1 = poison_dataset(ds, spec, 7);
        Dataset p2 = poison_dataset(ds, spec, 7);
        for (std::size_t i = 0; i < p1.size(); ++i) {
            CHECK(p1.labels[i] == p2.labels[i]);
            CHECK(p1.images[i].data == p2.images[i].data);
        }
    }

    SUBCASE("a fraction selecting nothing is an error") {
        spec.fraction = 0.001;
        CHECK_THROWS_AS(poison_dataset(ds, spec, 1), Error);
    }
}
