#include <doctest.h>

#include "dtspike/lif.hpp"
#include "dtspike/ops.hpp"
#include "dtspike/optim.hpp"
#include "dtspike/stepmask.hpp"
#include "oracles.hpp"

using namespace dts;

TEST_CASE("step scores: spec vectors") {
    Tensor s1 = step_scores(Tensor::from({4}, {0.01f, 0.01f, 1.5f, 0.01f}));
    CHECK(s1.values()[0] == doctest::Approx(1.53).epsilon(1e-6));
    CHECK(s1.values()[1] == doctest::Approx(1.52).epsilon(1e-6));
    CHECK(s1.values()[2] == doctest::Approx(1.51).epsilon(1e-6));
    CHECK(s1.values()[3] == doctest::Approx(0.01).epsilon(1e-6));

    Tensor s2 = step_scores(Tensor::zeros({4}));
    for (float v : s2.values()) CHECK(v == 0.0f);

    Tensor s3 = step_scores(Tensor::from({4}, {2.0f, 0.0f, 0.0f, 0.0f}));
    CHECK(s3.values()[0] == 2.0f);
    CHECK(s3.values()[1] == 0.0f);
    CHECK(s3.values()[3] == 0.0f);

    CHECK_THROWS_AS(step_scores(Tensor::from({2}, {-0.1f, 0.5f})), InvariantError);
}

TEST_CASE("step mask: spec vectors and surrogate window") {
    Tensor m1 = step_mask_of(Tensor::from({4}, {1.53f, 1.52f, 1.51f, 0.01f}));
    CHECK(m1.values()[0] == 1.0f);
    CHECK(m1.values()[1] == 1.0f);
    CHECK(m1.values()[2] == 1.0f);
    CHECK(m1.values()[3] == 0.0f);

    Tensor m2 = step_mask_of(Tensor::zeros({4}));
    for (float v : m2.values()) CHECK(v == 0.0f);

    // backward through the window
    Tensor ts = Tensor::from({4}, {1.5f, 0.5f, 0.0f, 0.0f}).set_requires_grad(true);
    GradTape tape;
    {
        GradTape::Scope scope(tape);
        Tensor tm = mask_threshold(ts);
        tape.backward(sum_all(tm));
    }
    CHECK(ts.grad()[0] == 1.0f);
    CHECK(ts.grad()[1] == 1.0f);
    CHECK(ts.grad()[2] == 0.0f);
    CHECK(ts.grad()[3] == 0.0f);
}

TEST_CASE("apply-mask semantics via scale_by_entry") {
    dts::Rng rng(41, "test.mask.apply");
    Tensor gate_ones = Tensor::from({3}, {1.0f, 1.0f, 1.0f});
    Tensor y = oracle::random_tensor({2, 4}, rng);
    // all ones: bitwise identity
    Tensor same = scale_by_entry(y, gate_ones, 1);
    for (size_t i = 0; i < y.values().size(); ++i) CHECK(same.values()[i] == y.values()[i]);

    // [1, 0, ...]: later steps exactly zero
    Tensor gate = Tensor::from({3}, {1.0f, 0.0f, 0.0f});
    std::vector<Tensor> steps = {oracle::random_tensor({2, 4}, rng), oracle::random_tensor({2, 4}, rng),
                                 oracle::random_tensor({2, 4}, rng)};
    double active_sum = 0.0, masked_sum = 0.0;
    for (int t = 0; t < 3; ++t) {
        Tensor masked = scale_by_entry(steps[static_cast<size_t>(t)], gate, t);
        for (float v : masked.values()) masked_sum += v;
        if (t == 0)
            for (float v : steps[0].values()) active_sum += v;
        if (t > 0)
            for (float v : masked.values()) CHECK(v == 0.0f);
    }
    // sum over the masked sequence equals the sum over active steps only
    CHECK(masked_sum == doctest::Approx(active_sum).epsilon(1e-6));

    CHECK_THROWS_AS(scale_by_entry(y, gate, 5), IndexError);
}

TEST_CASE("active step counting") {
    CHECK(active_steps(Tensor::from({4}, {1, 1, 1, 0})) == 3);
    CHECK(active_steps(Tensor::from({4}, {0, 0, 0, 0})) == 0);
    CHECK(active_steps(Tensor::from({4}, {1, 1, 1, 1})) == 4);
    CHECK_THROWS_AS(active_steps(Tensor::from({4}, {1, 0, 1, 0})), InvariantError);
    CHECK_THROWS_AS(active_steps(Tensor::from({2}, {0.5f, 0.0f})), InvariantError);
}

TEST_CASE("projection clamps negatives only") {
    Tensor p = Tensor::from({2}, {-0.1f, 0.5f});
    project_nonneg(p);
    CHECK(p.values()[0] == 0.0f);
    CHECK(p.values()[1] == 0.5f);

    Tensor q = Tensor::from({3}, {0.0f, 0.2f, 1.0f});
    project_nonneg(q);
    CHECK(q.values()[0] == 0.0f);
    CHECK(q.values()[1] == 0.2f);
    CHECK(q.values()[2] == 1.0f);
}

TEST_CASE("mask mechanics hold over 10000 random draws") {
    dts::Rng rng(4242, "test.mask.prop");
    for (int i = 0; i < 10000; ++i) {
        const int T = 1 + static_cast<int>(rng.below(8));
        std::vector<float> p(static_cast<size_t>(T));
        for (auto& v : p) v = static_cast<float>(rng.uniform(0.0, 2.0));
        Tensor params = Tensor::from({T}, p);
        Tensor ts = step_scores(params);
        // non-increasing
        for (int t = 1; t < T; ++t)
            REQUIRE(ts.values()[static_cast<size_t>(t)] <= ts.values()[static_cast<size_t>(t - 1)]);
        Tensor tm = step_mask_of(ts);
        // monotone and consistent with counting scores >= 1
        int count = 0;
        bool closed = false;
        for (int t = 0; t < T; ++t) {
            const float m = tm.values()[static_cast<size_t>(t)];
            REQUIRE((m == 0.0f || m == 1.0f));
            if (m == 1.0f) REQUIRE(!closed);
            if (m == 0.0f) closed = true;
            if (ts.values()[static_cast<size_t>(t)] >= 1.0f) ++count;
        }
        REQUIRE(active_steps(tm) == count);
        // scores match the explicit coefficient-matrix product
        auto ref = oracle::scores_by_coeff(oracle::to_double(params.values()));
        for (int t = 0; t < T; ++t)
            REQUIRE(std::fabs(ts.values()[static_cast<size_t>(t)] - ref[static_cast<size_t>(t)]) < 1e-5);
    }
}

TEST_CASE("projection keeps the invariants through noisy optimizer steps") {
    dts::Rng rng(99, "test.mask.train");
    StepMask gate(6, 3);
    AdamW opt({gate.params()}, {0.05f, 0.9f, 0.999f, 1e-8f, 0.0f});
    for (int step = 0; step < 100; ++step) {
        GradTape tape;
        {
            GradTape::Scope scope(tape);
            Tensor ts = step_scores(gate.params());
            Tensor tm = mask_threshold(ts);
            Tensor noise = oracle::random_tensor({6}, rng, -1.0f, 1.0f);
            tape.backward(sum_all(mul(tm, noise)));
        }
        opt.step();
        gate.project();
        for (float v : gate.params().values()) REQUIRE(v >= 0.0f);
        Tensor ts = gate.scores();
        for (int t = 1; t < 6; ++t)
            REQUIRE(ts.values()[static_cast<size_t>(t)] <= ts.values()[static_cast<size_t>(t - 1)]);
    }
}

TEST_CASE("gate initialization lands inside the surrogate window") {
    StepMask gate(4, 2);
    Tensor ts = gate.scores();
    CHECK(gate.active() == 2);
    CHECK(ts.values()[0] > 1.0f);
    CHECK(ts.values()[0] < 2.0f);
    CHECK(ts.values()[1] > 1.0f);
    CHECK(ts.values()[1] < 2.0f);
    CHECK(ts.values()[2] < 1.0f);

    CHECK_THROWS_AS(StepMask(4, 5), ConfigError);
    CHECK_THROWS_AS(StepMask(4, 0), ConfigError);
}
