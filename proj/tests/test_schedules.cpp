#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "abc/schedules.hpp"

using abc::PolicyKind;
using abc::SchedulePolicy;

TEST(RSchedule, CifarDecay) {
    SchedulePolicy p = abc::make_policy(PolicyKind::AbcRetrievalCifar);
    EXPECT_DOUBLE_EQ(abc::r_at(p, 0), 1.0);
    // Epoch 10: ten decays of 0.95. Compare against an iterative product.
    double iterative = 1.0;
    for (int i = 0; i < 10; ++i) iterative *= 0.95;
    EXPECT_NEAR(abc::r_at(p, 10), iterative, 1e-12);
    EXPECT_NEAR(abc::r_at(p, 10), 0.59874, 1e-5);
}

TEST(RSchedule, CifarFloorIsExact) {
    SchedulePolicy p = abc::make_policy(PolicyKind::AbcRetrievalCifar);
    // 0.95^n crosses 0.002 after 122 decays; from there the value is the
    // clamp constant bit for bit.
    EXPECT_GT(abc::r_at(p, 121), 0.002);
    for (const long epoch : {122L, 150L, 1000L}) {
        EXPECT_EQ(abc::r_at(p, epoch), 0.002);
    }
}

TEST(RSchedule, NusFloorIsExact) {
    SchedulePolicy p = abc::make_policy(PolicyKind::AbcRetrievalNus);
    EXPECT_GT(abc::r_at(p, 29), 0.1662);  // 0.94^29 = 0.16625 just above
    EXPECT_EQ(abc::r_at(p, 30), 0.1662);
    EXPECT_EQ(abc::r_at(p, 500), 0.1662);
    EXPECT_EQ(p.r_epoch_iterations, 1000);  // an epoch is 1000 iterations
}

TEST(RSchedule, ImagenetOverrideToZero) {
    SchedulePolicy p = abc::make_policy(PolicyKind::AbcImagenet);
    EXPECT_DOUBLE_EQ(abc::r_at(p, 0), 0.1);
    EXPECT_NEAR(abc::r_at(p, 4), 0.1 * std::sqrt(0.1), 1e-12);
    EXPECT_NEAR(abc::r_at(p, 15), 0.1 * std::pow(std::sqrt(0.1), 3), 1e-12);
    // The last 4 of 20 epochs run fully clamped.
    for (const long epoch : {16L, 17L, 18L, 19L}) {
        EXPECT_EQ(abc::r_at(p, epoch), 0.0);
    }
}

TEST(AlphaSchedule, RetrievalGrowth) {
    SchedulePolicy p = abc::make_policy(PolicyKind::TanhRetrieval);
    EXPECT_DOUBLE_EQ(abc::alpha_at(p, 0), 1.0);
    EXPECT_NEAR(abc::alpha_at(p, 4000), std::sqrt(21.0), 1e-12);
    EXPECT_NEAR(abc::alpha_at(p, 1000), std::sqrt(6.0), 1e-12);
}

TEST(AlphaSchedule, ImagenetWindowAndCap) {
    SchedulePolicy p = abc::make_policy(PolicyKind::TanhImagenet);
    EXPECT_DOUBLE_EQ(abc::alpha_at(p, 0), 1.0);
    EXPECT_DOUBLE_EQ(abc::alpha_at(p, 1), 1.0);  // held within the 2-epoch window
    EXPECT_NEAR(abc::alpha_at(p, 2), std::pow(31.0, 0.4), 1e-12);
    EXPECT_DOUBLE_EQ(abc::alpha_at(p, 3), abc::alpha_at(p, 2));
    // (1+15*16)^0.4 = 8.970 is the last uncapped window; (1+15*18)^0.4 =
    // 9.4013 already exceeds the published maximum of 9.401, so the final
    // window of a 20-epoch run emits the cap exactly.
    EXPECT_NEAR(abc::alpha_at(p, 16), std::pow(241.0, 0.4), 1e-12);
    EXPECT_LT(abc::alpha_at(p, 16), 9.401);
    for (const long epoch : {18L, 19L, 20L, 40L, 100L}) {
        EXPECT_EQ(abc::alpha_at(p, epoch), 9.401);  // capped exactly
    }
}

TEST(LrSchedule, CifarStaircase) {
    SchedulePolicy p = abc::make_policy(PolicyKind::AbcRetrievalCifar);
    EXPECT_DOUBLE_EQ(abc::lr_at(p, 0), 1e-4);
    EXPECT_DOUBLE_EQ(abc::lr_at(p, 3999), 1e-4);
    EXPECT_NEAR(abc::lr_at(p, 4000), 6e-5, 1e-15);
    EXPECT_NEAR(abc::lr_at(p, 8000), 1e-4 * 0.6 * 0.6, 1e-15);
}

TEST(LrSchedule, NusConstant) {
    SchedulePolicy p = abc::make_policy(PolicyKind::AbcRetrievalNus);
    for (const long it : {0L, 999L, 4000L, 29999L}) {
        EXPECT_DOUBLE_EQ(abc::lr_at(p, it), 1e-4);
    }
}

TEST(LrSchedule, ImagenetCoupledDecay) {
    SchedulePolicy p = abc::make_policy(PolicyKind::AbcImagenet);
    EXPECT_DOUBLE_EQ(abc::lr_at(p, 0), 0.01);
    EXPECT_NEAR(abc::lr_at(p, 4), 0.01 * std::sqrt(0.1), 1e-12);
    EXPECT_NEAR(abc::lr_at(p, 4), 3.162e-3, 1e-6);
}

TEST(CoupledDecay, Multipliers) {
    const auto [rm, lrm] = abc::coupled_decay(10.0);
    EXPECT_NEAR(rm, 0.31623, 1e-5);
    EXPECT_DOUBLE_EQ(rm, lrm);
    const auto [rm4, lrm4] = abc::coupled_decay(4.0);
    EXPECT_DOUBLE_EQ(rm4, 0.5);
    EXPECT_DOUBLE_EQ(lrm4, 0.5);
    EXPECT_THROW(abc::coupled_decay(1.0), abc::ParameterError);
    EXPECT_THROW(abc::coupled_decay(0.5), abc::ParameterError);
}

TEST(CoupledDecay, ProductIsOneOverK) {
    std::mt19937 rng(2);
    std::uniform_real_distribution<double> ks(1.0001, 500.0);
    for (int i = 0; i < 10000; ++i) {
        const double k = ks(rng);
        const auto [a, b] = abc::coupled_decay(k);
        EXPECT_NEAR(a * b, 1.0 / k, 1e-15 * (1.0 / k) + 1e-18);
    }
}

TEST(CoupledDecay, EffectiveStepInvariance) {
    // For a layer before the clamp, the effective step scales with lr * r.
    // After coupled_decay(k) that product equals a plain 1/k lr decay.
    std::mt19937 rng(3);
    std::uniform_real_distribution<double> vals(1e-5, 1.0);
    for (int i = 0; i < 10000; ++i) {
        const double lr = vals(rng);
        const double r = vals(rng);
        const double k = 1.0 + 99.0 * vals(rng);
        const auto [rm, lrm] = abc::coupled_decay(k);
        const double coupled = (lr * lrm) * (r * rm);
        const double plain = (lr / k) * r;
        EXPECT_NEAR(coupled, plain, 1e-12 * plain);
    }
}

TEST(Invariants, RMonotoneNonIncreasingAndNonNegative) {
    for (const PolicyKind kind :
         {PolicyKind::AbcRetrievalCifar, PolicyKind::AbcRetrievalNus, PolicyKind::AbcImagenet,
          PolicyKind::TanhRetrieval, PolicyKind::Constant}) {
        SchedulePolicy p = abc::make_policy(kind);
        double prev = abc::r_at(p, 0);
        for (long epoch = 1; epoch <= 300; ++epoch) {
            const double r = abc::r_at(p, epoch);
            EXPECT_LE(r, prev) << abc::to_string(kind) << " epoch " << epoch;
            EXPECT_GE(r, 0.0);
            prev = r;
        }
    }
}

TEST(Invariants, AlphaMonotoneNonDecreasingAndCapped) {
    for (const PolicyKind kind : {PolicyKind::TanhRetrieval, PolicyKind::TanhImagenet}) {
        SchedulePolicy p = abc::make_policy(kind);
        double prev = abc::alpha_at(p, 0);
        for (long step = 1; step <= 5000; ++step) {
            const double a = abc::alpha_at(p, step);
            EXPECT_GE(a, prev);
            EXPECT_LE(a, p.alpha.cap);
            prev = a;
        }
    }
}

TEST(Invariants, NegativeStepRejected) {
    SchedulePolicy p = abc::make_policy(PolicyKind::AbcRetrievalCifar);
    EXPECT_THROW(abc::r_at(p, -1), abc::ParameterError);
    EXPECT_THROW(abc::alpha_at(p, -1), abc::ParameterError);
    EXPECT_THROW(abc::lr_at(p, -1), abc::ParameterError);
}

TEST(PolicyKinds, RoundTripAndUnknown) {
    for (const char* name : {"abc-retrieval-cifar", "abc-retrieval-nus", "abc-imagenet", "tanh-retrieval",
                             "tanh-imagenet", "constant"}) {
        EXPECT_EQ(abc::to_string(abc::policy_kind_from_string(name)), name);
    }
    EXPECT_THROW(abc::policy_kind_from_string("adam-warmup"), abc::ConfigError);
}

TEST(ScheduleAt, RoutesUnitsPerRule) {
    SchedulePolicy cifar = abc::make_policy(PolicyKind::AbcRetrievalCifar);
    abc::ScheduleState s = abc::schedule_at(cifar, /*epoch=*/10, /*iteration=*/4200);
    EXPECT_DOUBLE_EQ(s.r, abc::r_at(cifar, 10));         // epochs
    EXPECT_DOUBLE_EQ(s.lr, abc::lr_at(cifar, 4200));     // iterations
    SchedulePolicy nus = abc::make_policy(PolicyKind::AbcRetrievalNus);
    abc::ScheduleState sn = abc::schedule_at(nus, /*epoch=*/3, /*iteration=*/2500);
    EXPECT_DOUBLE_EQ(sn.r, abc::r_at(nus, 2));  // 1000-iteration epochs, not dataset epochs
}
