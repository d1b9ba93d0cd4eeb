#include <cmath>

#include <gtest/gtest.h>
#include <torch/torch.h>

#include "grad_check.hpp"
#include "m2iosr/baselines.hpp"
#include "m2iosr/encoder.hpp"
#include "m2iosr/errors.hpp"
#include "m2iosr/gaussian_constraint.hpp"
#include "m2iosr/mi_objectives.hpp"
#include "m2iosr/model.hpp"
#include "m2iosr/trainer.hpp"

using namespace m2iosr;

namespace {

const double kLog2 = std::log(2.0);

// log(1 + e^s) by direct evaluation, for moderate s
double naive_softplus(double s) { return std::log(1.0 + std::exp(s)); }

EncoderConfig tiny_config() {
    EncoderConfig c;
    c.input = ImageShape{3, 32, 32};
    c.stage_widths = {4, 6, 6, 8};
    c.latent_dim = 8;
    c.num_known = 6;
    c.adapter_channels = 4;
    c.disc_hidden = 16;
    return c;
}

torch::Tensor random_images(std::int64_t n, std::uint64_t seed, torch::Dtype dtype = torch::kFloat32) {
    auto gen = at::detail::createCPUGenerator(seed);
    return torch::rand({n, 3, 32, 32}, gen).to(dtype);
}

void zero_all_discriminators(OsrModel& m) {
    m->heads->global_disc->zero_output_layer();
    m->heads->local_1t16->zero_output_layer();
    m->heads->local_1t4->zero_output_layer();
    m->heads->local_4t4->zero_output_layer();
}

} // namespace

// ---- encoder ----

TEST(Encoder, DefaultConfigTapShapes) {
    EncoderConfig c;
    torch::manual_seed(0);
    Encoder enc(c);
    auto taps = enc->forward(random_images(4, 1));
    EXPECT_EQ(taps.f16.sizes(), (std::vector<std::int64_t>{4, 128, 16, 16}));
    EXPECT_EQ(taps.f4.sizes(), (std::vector<std::int64_t>{4, 256, 4, 4}));
    EXPECT_EQ(taps.stats.mu.sizes(), (std::vector<std::int64_t>{4, 32}));
    EXPECT_EQ(taps.stats.log_var.sizes(), (std::vector<std::int64_t>{4, 32}));
}

TEST(Encoder, SingleZeroImageGivesFiniteOutputs) {
    Encoder enc(tiny_config());
    enc->eval();
    auto taps = enc->forward(torch::zeros({1, 3, 32, 32}));
    EXPECT_TRUE(torch::isfinite(taps.f16).all().item<bool>());
    EXPECT_TRUE(torch::isfinite(taps.f4).all().item<bool>());
    EXPECT_TRUE(torch::isfinite(taps.stats.mu).all().item<bool>());
    EXPECT_EQ(taps.f16.sizes(), (std::vector<std::int64_t>{1, 6, 16, 16}));
    EXPECT_EQ(taps.f4.sizes(), (std::vector<std::int64_t>{1, 8, 4, 4}));
}

TEST(Encoder, IdenticalImagesGiveIdenticalRows) {
    Encoder enc(tiny_config());
    auto x = random_images(1, 3);
    auto batch = torch::cat({x, x, random_images(1, 4)});
    auto taps = enc->forward(batch);
    EXPECT_TRUE(torch::equal(taps.f16[0], taps.f16[1]));
    EXPECT_TRUE(torch::equal(taps.f4[0], taps.f4[1]));
    EXPECT_TRUE(torch::equal(taps.stats.mu[0], taps.stats.mu[1]));
}

TEST(Encoder, EvalModeForwardIsBitIdentical) {
    Encoder enc(tiny_config());
    enc->eval();
    auto x = random_images(3, 5);
    auto a = enc->forward(x);
    auto b = enc->forward(x);
    EXPECT_TRUE(torch::equal(a.stats.mu, b.stats.mu));
    EXPECT_TRUE(torch::equal(a.f16, b.f16));
}

TEST(Encoder, TapsScaleWithInputSize) {
    auto c = tiny_config();
    c.input = ImageShape{3, 64, 64};
    Encoder enc(c);
    auto taps = enc->forward(torch::rand({2, 3, 64, 64}));
    EXPECT_EQ(taps.f16.size(2), 32);
    EXPECT_EQ(taps.f4.size(2), 8);
    EXPECT_EQ(taps.f16.size(2), 4 * taps.f4.size(2));
}

TEST(Encoder, RejectsWrongShapeAndBadConfig) {
    Encoder enc(tiny_config());
    EXPECT_THROW(enc->forward(torch::rand({2, 1, 32, 32})), ConfigError);
    auto c = tiny_config();
    c.input = ImageShape{3, 30, 30};
    EXPECT_THROW(c.validate(), ConfigError);
    c = tiny_config();
    c.latent_dim = 0;
    EXPECT_THROW(c.validate(), ConfigError);
    c = tiny_config();
    c.num_known = 1;
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Encoder, NonFiniteInputNamesTheStage) {
    Encoder enc(tiny_config());
    auto x = random_images(2, 6);
    x[0][0][0][0] = std::numeric_limits<float>::quiet_NaN();
    try {
        enc->forward(x);
        FAIL() << "expected NumericError";
    } catch (const NumericError& e) {
        EXPECT_NE(std::string(e.what()).find("stage"), std::string::npos);
    }
}

// ---- latent sampling ----

TEST(SampleLatent, EvalModeReturnsMu) {
    auto mu = torch::tensor({{1.0, -2.0, 0.5, 3.0}});
    LatentStats s{mu, torch::full({1, 4}, 2.0)};
    auto z = sample_latent(s, LatentMode::Eval, at::detail::createCPUGenerator(0));
    EXPECT_TRUE(torch::equal(z, mu));
}

TEST(SampleLatent, HugeNegativeLogVarCollapsesToMu) {
    auto mu = torch::tensor({{1.0, -2.0, 0.5}}, torch::kFloat64);
    LatentStats s{mu, torch::full({1, 3}, -1e30, torch::kFloat64)};
    auto z = sample_latent(s, LatentMode::Train, at::detail::createCPUGenerator(1));
    // log_var floors at -10, so the spread is exp(-5) * eps
    EXPECT_LT((z - mu).abs().max().item<double>(), 0.05);
    EXPECT_TRUE(torch::isfinite(z).all().item<bool>());
}

TEST(SampleLatent, FixedSeedIsReproducible) {
    LatentStats s{torch::zeros({3, 5}), torch::zeros({3, 5})};
    auto a = sample_latent(s, LatentMode::Train, at::detail::createCPUGenerator(9));
    auto b = sample_latent(s, LatentMode::Train, at::detail::createCPUGenerator(9));
    EXPECT_TRUE(torch::equal(a, b));
}

TEST(SampleLatentProperty, MomentsMatchOverTenThousandDraws) {
    const int n = 10000;
    auto mu_row = torch::tensor({0.5, -1.0, 2.0, 0.0}, torch::kFloat64);
    auto lv_row = torch::tensor({0.0, 1.0, -1.0, 2.0}, torch::kFloat64);
    LatentStats s{mu_row.unsqueeze(0).repeat({n, 1}), lv_row.unsqueeze(0).repeat({n, 1})};
    auto z = sample_latent(s, LatentMode::Train, at::detail::createCPUGenerator(17));
    auto mean = z.mean(0);
    auto var = z.var(0);
    for (int j = 0; j < 4; ++j) {
        const double sigma2 = std::exp(lv_row[j].item<double>());
        // 3 standard errors of the mean and of the sample variance
        EXPECT_NEAR(mean[j].item<double>(), mu_row[j].item<double>(), 3.0 * std::sqrt(sigma2 / n));
        EXPECT_NEAR(var[j].item<double>(), sigma2, 3.0 * sigma2 * std::sqrt(2.0 / (n - 1)));
    }
}

// ---- classifier ----

TEST(Classifier, ZeroWeightsGiveUniformSoftmax) {
    Classifier cls(8, 6, std::nullopt);
    {
        torch::NoGradGuard g;
        for (auto& p : cls->parameters()) p.zero_();
    }
    auto logits = cls->forward(torch::randn({3, 8}));
    EXPECT_EQ(logits.size(1), 6);
    auto probs = torch::softmax(logits, 1);
    EXPECT_TRUE(torch::allclose(probs, torch::full({3, 6}, 1.0 / 6.0)));
}

TEST(Classifier, IdenticalRowsGiveIdenticalLogits) {
    Classifier cls(8, 6, 12);
    auto z = torch::randn({1, 8});
    auto logits = cls->forward(torch::cat({z, z}));
    EXPECT_TRUE(torch::equal(logits[0], logits[1]));
}

// ---- MI objectives ----

TEST(Softplus, StableAndMatchesDirectEvaluation) {
    for (double s : {-20.0, -3.0, -1.0, 0.0, 0.5, 1.0, 7.0, 30.0}) {
        EXPECT_NEAR(softplus(s), naive_softplus(s), 1e-12);
    }
    EXPECT_DOUBLE_EQ(softplus(1000.0), 1000.0);
    EXPECT_NEAR(softplus(-1000.0), 0.0, 1e-300);
}

TEST(Jsd, AllZeroScoresGiveMinusTwoLogTwo) {
    std::vector<double> zeros(5, 0.0);
    EXPECT_NEAR(jsd_objective(zeros, zeros), -2.0 * kLog2, 1e-12);
    EXPECT_NEAR(jsd_objective(torch::zeros({7}), torch::zeros({3})).item<double>(), -1.386294, 1e-6);
}

TEST(Jsd, ScalarCaseMatchesIndependentOracle) {
    const double oracle = -std::log(1.0 + std::exp(-1.0)) - std::log(1.0 + std::exp(-1.0));
    std::vector<double> pos{1.0}, neg{-1.0};
    EXPECT_NEAR(jsd_objective(pos, neg), oracle, 1e-12);
    EXPECT_NEAR(jsd_objective(pos, neg), -0.626523, 1e-6);
    auto t = jsd_objective(torch::tensor({1.0}, torch::kFloat64), torch::tensor({-1.0}, torch::kFloat64));
    EXPECT_NEAR(t.item<double>(), oracle, 1e-12);
}

TEST(Jsd, ApproachesZeroForSeparatedScores) {
    std::vector<double> pos{60.0, 80.0}, neg{-60.0, -90.0};
    EXPECT_NEAR(jsd_objective(pos, neg), 0.0, 1e-20);
    EXPECT_LE(jsd_objective(pos, neg), 0.0);
}

TEST(Jsd, DroppedTermsContributeNothing) {
    auto pos = torch::tensor({0.3, -1.2}, torch::kFloat64);
    auto neg = torch::tensor({2.0}, torch::kFloat64);
    const double p = -(naive_softplus(-0.3) + naive_softplus(1.2)) / 2.0;
    const double n = -naive_softplus(2.0);
    EXPECT_NEAR(jsd_objective(pos, neg, PairTerms::PositiveOnly).item<double>(), p, 1e-12);
    EXPECT_NEAR(jsd_objective(pos, neg, PairTerms::NegativeOnly).item<double>(), n, 1e-12);
    EXPECT_NEAR(jsd_objective(pos, neg, PairTerms::Both).item<double>(), p + n, 1e-12);
}

TEST(JsdProperty, PermutationInvariantWithinEachSet) {
    torch::manual_seed(10);
    for (int trial = 0; trial < 50; ++trial) {
        auto pos = torch::randn({16}, torch::kFloat64) * 3;
        auto neg = torch::randn({16}, torch::kFloat64) * 3;
        auto base = jsd_objective(pos, neg).item<double>();
        auto pp = pos.index_select(0, torch::randperm(16));
        auto nn = neg.index_select(0, torch::randperm(16));
        ASSERT_NEAR(jsd_objective(pp, nn).item<double>(), base, 1e-12);
    }
}

TEST(JsdProperty, MonotoneInEachScore) {
    torch::manual_seed(11);
    for (int trial = 0; trial < 50; ++trial) {
        auto pos = torch::randn({8}, torch::kFloat64) * 4;
        auto neg = torch::randn({8}, torch::kFloat64) * 4;
        const double base = jsd_objective(pos, neg).item<double>();
        const auto i = trial % 8;
        auto pos_up = pos.clone();
        pos_up[i] += 0.01;
        auto neg_up = neg.clone();
        neg_up[i] += 0.01;
        ASSERT_GT(jsd_objective(pos_up, neg).item<double>(), base);
        ASSERT_LT(jsd_objective(pos, neg_up).item<double>(), base);
    }
}

TEST(NegativePairing, CyclicShift) {
    EXPECT_EQ(negative_pairing(4), (std::vector<std::int64_t>{1, 2, 3, 0}));
    EXPECT_EQ(negative_pairing(2), (std::vector<std::int64_t>{1, 0}));
    EXPECT_THROW(negative_pairing(1), ConfigError);
    auto f = torch::arange(4).view({4, 1});
    EXPECT_TRUE(torch::equal(make_negative_pairing(f).view(-1), torch::tensor({1, 2, 3, 0}, torch::kLong)));
}

TEST(NegativePairing, NoRowMeetsItself) {
    for (std::int64_t b = 2; b < 70; ++b) {
        auto p = negative_pairing(b);
        for (std::int64_t i = 0; i < b; ++i) ASSERT_NE(p[i], i);
    }
}

TEST(MiTerms, ZeroOutputLayersGiveMinusTwoLogTwoForEveryTerm) {
    torch::manual_seed(2);
    OsrModel m(tiny_config(), false);
    zero_all_discriminators(m);
    auto taps = m->encoder->forward(random_images(4, 8));
    auto z = taps.stats.mu;
    auto t = m->heads->compute(taps, z);
    for (const auto& v : {t.l_global, t.l_1t16, t.l_1t4, t.l_4t4}) EXPECT_NEAR(v.item<double>(), -2 * kLog2, 1e-6);
}

TEST(MiTerms, DuplicateImagesGiveMatchingPairScores) {
    torch::manual_seed(3);
    OsrModel m(tiny_config(), false);
    auto x = random_images(1, 12);
    auto taps = m->encoder->forward(torch::cat({x, x}));
    auto z = taps.stats.mu;
    auto s = m->heads->global_disc->forward(taps.f16, z);
    const double expected =
        (-(naive_softplus(-s[0].item<double>()) + naive_softplus(-s[1].item<double>())) -
         (naive_softplus(s[0].item<double>()) + naive_softplus(s[1].item<double>()))) /
        2.0;
    EXPECT_NEAR(global_mi(taps.f16, z, m->heads->global_disc).item<double>(), expected, 1e-5);
}

TEST(LocalDiscriminator, ScoresEveryLocation) {
    LocalDiscriminator d(6, 8, 16);
    auto scores = d->forward(torch::randn({4, 6, 16, 16}), torch::randn({4, 8}));
    EXPECT_EQ(scores.sizes(), (std::vector<std::int64_t>{4, 16, 16}));
    auto s4 = d->forward(torch::randn({2, 6, 4, 4}), torch::randn({2, 8}));
    EXPECT_EQ(s4[0].numel(), 16);
}

TEST(GlobalDiscriminator, OneScorePerSample) {
    GlobalDiscriminator d(6, 16, 16, 8, 4, 16);
    auto s = d->forward(torch::randn({3, 6, 16, 16}), torch::randn({3, 8}));
    EXPECT_EQ(s.sizes(), (std::vector<std::int64_t>{3}));
}

TEST(LocalWeights, DefaultsAndValidation) {
    LocalWeights w;
    EXPECT_DOUBLE_EQ(w.a1, 0.7);
    EXPECT_DOUBLE_EQ(w.a2, 0.1);
    EXPECT_DOUBLE_EQ(w.a3, 0.2);
    EXPECT_NO_THROW(w.validate());
    EXPECT_THROW((LocalWeights{0.7, 0.2, 0.2}.validate()), ConfigError);
    EXPECT_THROW((LocalWeights{1.2, -0.2, 0.0}.validate()), ConfigError);
}

TEST(LocalWeights, EqualTermsGiveThatValue) {
    for (auto w : {LocalWeights{}, LocalWeights{0.7, 0.3, 0.0}, LocalWeights{0.7, 0.0, 0.3}}) {
        EXPECT_NEAR(local_mi_loss(-0.83, -0.83, -0.83, w), -0.83, 1e-12);
    }
    EXPECT_NEAR(local_mi_loss(1.0, 2.0, 4.0, LocalWeights{}), 0.7 + 0.2 + 0.8, 1e-12);
}

// ---- class centers and KL ----

TEST(ClassCenters, ShapeOneHotAndRange) {
    ClassCenterMap map(6, 32);
    EXPECT_EQ(map->centers.sizes(), (std::vector<std::int64_t>{6, 32}));
    auto one_hot = torch::zeros({1, 6});
    one_hot[0][4] = 1.0;
    EXPECT_TRUE(torch::allclose(map->forward(one_hot)[0], map->center_of(4)));
    EXPECT_THROW(map->center_of(6), ConfigError);
    EXPECT_THROW(map->center_of(-1), ConfigError);
    {
        torch::NoGradGuard g;
        map->centers.zero_();
    }
    EXPECT_TRUE(torch::equal(map->center_of(2), torch::zeros({32})));
}

TEST(ClassCenters, InitialisedWithUnitSpread) {
    torch::manual_seed(5);
    ClassCenterMap map(100, 100);
    EXPECT_NEAR(map->centers.std().item<double>(), 1.0, 0.03);
    EXPECT_TRUE(map->centers.requires_grad());
}

namespace {

struct KlFixture {
    ClassCenterMap map{6, 32};
    torch::Tensor labels = torch::tensor({0, 3, 5, 3}, torch::kLong);
    torch::Tensor centers() { return map->centers_for(labels).detach(); }
};

} // namespace

TEST(KlLoss, MatchedGaussianIsZero) {
    KlFixture f;
    LatentStats s{f.centers(), torch::zeros({4, 32})};
    EXPECT_NEAR(kl_loss(s, f.labels, f.map).item<double>(), 0.0, 1e-9);
}

TEST(KlLoss, ShiftedMeanGivesHalfJDeltaSquared) {
    KlFixture f;
    LatentStats s{f.centers().to(torch::kFloat64) + 0.5, torch::zeros({4, 32}, torch::kFloat64)};
    f.map->to(torch::kFloat64);
    // 0.5 * 32 * 0.25
    EXPECT_NEAR(kl_loss(s, f.labels, f.map).item<double>(), 4.0, 1e-6);
}

TEST(KlLoss, UnitLogVarGivesEMinusTwoTerm) {
    KlFixture f;
    f.map->to(torch::kFloat64);
    LatentStats s{f.centers(), torch::ones({4, 32}, torch::kFloat64)};
    const double oracle = 32.0 * (std::exp(1.0) - 2.0) / 2.0;
    EXPECT_NEAR(kl_loss(s, f.labels, f.map).item<double>(), oracle, 1e-6);
    EXPECT_NEAR(oracle, 11.4925, 1e-4);
}

TEST(KlLossProperty, NonNegativeAndPermutationInvariant) {
    torch::manual_seed(21);
    ClassCenterMap map(5, 7);
    map->to(torch::kFloat64);
    for (int trial = 0; trial < 100; ++trial) {
        auto labels = torch::randint(0, 5, {9}, torch::kLong);
        LatentStats s{torch::randn({9, 7}, torch::kFloat64) * 2, torch::randn({9, 7}, torch::kFloat64) * 2};
        const double kl = kl_loss(s, labels, map).item<double>();
        ASSERT_GE(kl, -1e-9);
        auto perm = torch::randperm(9);
        LatentStats sp{s.mu.index_select(0, perm), s.log_var.index_select(0, perm)};
        ASSERT_NEAR(kl_loss(sp, labels.index_select(0, perm), map).item<double>(), kl, 1e-10);
    }
}

TEST(KlLossProperty, GradientWrtMuIsOffsetOverBatch) {
    torch::manual_seed(22);
    ClassCenterMap map(3, 4);
    map->to(torch::kFloat64);
    auto labels = torch::tensor({0, 2}, torch::kLong);
    auto mu = torch::randn({2, 4}, torch::kFloat64).requires_grad_(true);
    LatentStats s{mu, torch::randn({2, 4}, torch::kFloat64)};
    kl_loss(s, labels, map).backward();
    auto expected = (mu - map->centers_for(labels)).detach() / 2.0; // batch mean over 2
    EXPECT_TRUE(torch::allclose(mu.grad(), expected, 1e-12, 1e-12));
}

// ---- trainer ----

TEST(TrainConfig, DefaultsAndSchedule) {
    TrainConfig c;
    EXPECT_DOUBLE_EQ(c.beta1, 0.5);
    EXPECT_DOUBLE_EQ(c.beta2, 1.0);
    EXPECT_DOUBLE_EQ(c.gamma, 0.1);
    EXPECT_DOUBLE_EQ(c.lr, 0.01);
    EXPECT_DOUBLE_EQ(c.momentum, 0.9);
    EXPECT_EQ(c.batch_size, 64);
    EXPECT_NEAR(lr_at_epoch(c, 0), 0.01, 1e-15);
    EXPECT_NEAR(lr_at_epoch(c, 49), 0.01, 1e-15);
    EXPECT_NEAR(lr_at_epoch(c, 50), 0.001, 1e-15);
    EXPECT_NEAR(lr_at_epoch(c, 100), 0.0001, 1e-15);
    for (int e = 0; e < 300; ++e) {
        EXPECT_NEAR(lr_at_epoch(c, e), 0.01 * std::pow(0.1, e / 50), 1e-15);
    }
}

TEST(TrainConfig, Validation) {
    TrainConfig c;
    c.batch_size = 1;
    EXPECT_THROW(c.validate(), ConfigError);
    c = TrainConfig{};
    c.lr = 0;
    EXPECT_THROW(c.validate(), ConfigError);
    c = TrainConfig{};
    c.gamma = -1;
    EXPECT_THROW(c.validate(), ConfigError);
    c = TrainConfig{};
    c.local = LocalWeights{0.5, 0.5, 0.5};
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Maxmin, ZeroDiscriminatorsAndNoKlGiveAnalyticTotal) {
    torch::manual_seed(7);
    OsrModel m(tiny_config(), false);
    zero_all_discriminators(m);
    TrainConfig c;
    c.gamma = 0.0;
    auto x = random_images(4, 30);
    auto y = torch::tensor({0, 1, 2, 3}, torch::kLong);
    auto t = maxmin_objective(m, x, y, torch::zeros({4, 8}), c, ObjectiveSpec{});
    EXPECT_NEAR(t.total.item<double>(), 3.0 * kLog2, 1e-6);
    EXPECT_NEAR(t.total.item<double>(), 2.079442, 1e-6);
}

TEST(Maxmin, MatchedGaussianAddsNoKl) {
    torch::manual_seed(8);
    OsrModel m(tiny_config(), false);
    zero_all_discriminators(m);
    m->eval();
    auto x = random_images(3, 31);
    auto y = torch::tensor({1, 4, 4}, torch::kLong);
    {
        // point the class centers at the current posterior means
        torch::NoGradGuard g;
        auto stats = m->encoder->forward(x).stats;
        m->centers->centers.index_put_({y}, stats.mu);
    }
    auto stats = m->encoder->forward(x).stats;
    LatentStats unit{stats.mu, torch::zeros_like(stats.log_var)};
    EXPECT_NEAR(kl_loss(unit, y, m->centers).item<double>(), 0.0, 1e-9);
}

TEST(Maxmin, TotalRecomposesFromParts) {
    torch::manual_seed(9);
    OsrModel m(tiny_config(), false);
    TrainConfig c;
    auto x = random_images(5, 32);
    auto y = torch::tensor({0, 1, 2, 3, 4}, torch::kLong);
    auto t = maxmin_objective(m, x, y, torch::randn({5, 8}), c, ObjectiveSpec{});
    const double local = 0.7 * t.l_1t16.item<double>() + 0.1 * t.l_1t4.item<double>() + 0.2 * t.l_4t4.item<double>();
    EXPECT_NEAR(t.l_local.item<double>(), local, 1e-6);
    const double total = -(0.5 * t.l_global.item<double>() + 1.0 * local) + 0.1 * t.l_kl.item<double>();
    EXPECT_NEAR(t.total.item<double>(), total, 1e-6);
}

TEST(Maxmin, SmallStepDecreasesLossOnSameBatch) {
    torch::manual_seed(10);
    auto cfg = tiny_config();
    OsrModel m(cfg, false);
    TrainConfig c;
    c.lr = 1e-4;
    c.momentum = 0.0;
    Trainer trainer(m, c);
    auto x = random_images(4, 33);
    auto y = torch::tensor({0, 1, 2, 3}, torch::kLong);
    auto eps = torch::zeros({4, 8});
    const double before = trainer.measure(x, y, eps).l_maxmin_total;
    m->train();
    auto loss = maxmin_objective(m, x, y, eps, c, ObjectiveSpec{}).total;
    m->zero_grad();
    loss.backward();
    {
        torch::NoGradGuard g;
        for (auto& p : m->parameters()) {
            if (p.grad().defined()) p.add_(p.grad(), -c.lr);
        }
    }
    const double after = trainer.measure(x, y, eps).l_maxmin_total;
    EXPECT_LT(after, before);
}

TEST(Classification, UniformLogitsGiveLogSix) {
    OsrModel m(tiny_config(), false);
    {
        torch::NoGradGuard g;
        for (auto& p : m->classifier->parameters()) p.zero_();
    }
    auto ce = classification_objective(m, random_images(4, 34), torch::tensor({0, 1, 2, 5}, torch::kLong),
                                       torch::zeros({4, 8}));
    EXPECT_NEAR(ce.item<double>(), std::log(6.0), 1e-6);
    EXPECT_NEAR(ce.item<double>(), 1.791759, 1e-6);
}

TEST(Classification, ConfidentCorrectLogitsGiveNearZero) {
    auto logits = torch::full({2, 6}, -50.0);
    logits[0][1] = 50.0;
    logits[1][4] = 50.0;
    auto ce = torch::nn::functional::cross_entropy(logits, torch::tensor({1, 4}, torch::kLong));
    EXPECT_LT(ce.item<double>(), 1e-12);
}

TEST(Classification, CrossEntropyFallsOnSeparableToySet) {
    torch::manual_seed(12);
    auto cfg = tiny_config();
    cfg.num_known = 2;
    OsrModel m(cfg, false);
    TrainConfig c;
    Trainer trainer(m, c, baseline_spec(BaselineId::Cnn).objective);
    // class 0 dark, class 1 bright
    auto x = torch::cat({torch::rand({8, 3, 32, 32}) * 0.3, torch::rand({8, 3, 32, 32}) * 0.3 + 0.7});
    auto y = torch::cat({torch::zeros({8}, torch::kLong), torch::ones({8}, torch::kLong)});
    const double first = trainer.classification_step(x, y);
    double last = first;
    for (int i = 0; i < 49; ++i) last = trainer.classification_step(x, y);
    EXPECT_LT(last, first);
    EXPECT_LT(last, 0.2);
}

TEST(Trainer, SameSeedGivesBitIdenticalHistory) {
    auto run = [] {
        ImageBatch data(40, ImageShape{3, 32, 32});
        auto noise = synth_noise(40, ImageShape{3, 32, 32}, 1);
        data.pixels = noise.pixels;
        data.labels.resize(40);
        for (int i = 0; i < 40; ++i) data.labels[i] = i % 6;
        TrainConfig c;
        c.batch_size = 16;
        c.epochs = 2;
        c.seed = 3;
        auto m = make_model(tiny_config(), c.seed);
        Trainer t(m, c);
        auto h = t.train(data);
        return std::make_pair(h, t.rng_digest());
    };
    auto [a, da] = run();
    auto [b, db] = run();
    ASSERT_EQ(a.size(), b.size());
    ASSERT_EQ(a.size(), 6u); // 3 batches (16, 16, 8) per epoch
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].values(), b[i].values());
    EXPECT_EQ(da, db);
}

TEST(Trainer, NonFiniteLossAborts) {
    OsrModel m(tiny_config(), false);
    TrainConfig c;
    Trainer trainer(m, c);
    auto x = random_images(4, 40);
    x[1][0][3][3] = std::numeric_limits<float>::infinity();
    EXPECT_THROW(trainer.maxmin_step(x, torch::tensor({0, 1, 2, 3}, torch::kLong)), NumericError);
}

TEST(Trainer, DropsOnlyASingletonFinalBatch) {
    ImageBatch data(9, ImageShape{3, 32, 32});
    data.labels = {0, 1, 2, 3, 4, 5, 0, 1, 2};
    TrainConfig c;
    c.batch_size = 4;
    c.epochs = 1;
    Trainer t(make_model(tiny_config(), 0), c);
    EXPECT_EQ(t.train(data).size(), 2u);
    data.pixels.resize(10 * 3 * 1024);
    data.labels.push_back(3);
    Trainer t2(make_model(tiny_config(), 0), c);
    EXPECT_EQ(t2.train(data).size(), 3u);
}

// ---- gradients ----

TEST(GradientCheck, MicroConfigurationMatchesFiniteDifferences) {
    EncoderConfig cfg;
    cfg.input = ImageShape{3, 32, 32};
    cfg.stage_widths = {4, 4, 4, 4};
    cfg.latent_dim = 8;
    cfg.num_known = 3;
    cfg.adapter_channels = 4;
    cfg.disc_hidden = 16;
    auto m = make_model(cfg, 5);
    m->to(torch::kFloat64);
    auto x = random_images(4, 50, torch::kFloat64);
    auto y = torch::tensor({0, 1, 2, 1}, torch::kLong);
    auto eps = torch::randn({4, 8}, at::detail::createCPUGenerator(51)).to(torch::kFloat64);
    TrainConfig c;
    auto errors = test_support::check_group_gradients(
        m, [&] { return maxmin_objective(m, x, y, eps, c, ObjectiveSpec{}).total; }, 1e-6, true, 52);
    EXPECT_GE(errors.size(), 12u); // encoder, 3 local, global, projection, centers; twice each
    for (const auto& e : errors) {
        EXPECT_LT(e.rel_error, 1e-3) << e.group << " analytic " << e.analytic << " numeric " << e.numeric;
    }
}

// ---- baselines ----

TEST(Baselines, WeightOverrides) {
    TrainConfig base;
    auto full = baseline_spec(BaselineId::Full).apply(base);
    EXPECT_DOUBLE_EQ(full.local.a1, 0.7);
    EXPECT_DOUBLE_EQ(full.local.a2, 0.1);
    EXPECT_DOUBLE_EQ(full.local.a3, 0.2);
    EXPECT_DOUBLE_EQ(full.beta1, base.beta1);
    EXPECT_DOUBLE_EQ(full.gamma, base.gamma);
    EXPECT_EQ(full.batch_size, base.batch_size);
    auto v = baseline_spec(BaselineId::DimKl1t4).apply(base);
    EXPECT_DOUBLE_EQ(v.local.a2, 0.3);
    EXPECT_DOUBLE_EQ(v.local.a3, 0.0);
    auto vi = baseline_spec(BaselineId::DimKl4t4).apply(base);
    EXPECT_DOUBLE_EQ(vi.local.a2, 0.0);
    EXPECT_DOUBLE_EQ(vi.local.a3, 0.3);
    EXPECT_DOUBLE_EQ(baseline_spec(BaselineId::Dim).apply(base).gamma, 0.0);
    EXPECT_FALSE(baseline_spec(BaselineId::Dim).objective.kl);
    EXPECT_TRUE(baseline_spec(BaselineId::DimKl).objective.kl);
}

TEST(Baselines, NamesRoundTripAndUnknownIdFails) {
    for (auto id : all_baselines()) EXPECT_EQ(baseline_from_string(to_string(id)), id);
    EXPECT_EQ(all_baselines().size(), 9u);
    EXPECT_THROW(baseline_from_string("VIII"), ConfigError);
}

TEST(Baselines, CnnHasOnlyCrossEntropy) {
    auto b = build_baseline(baseline_spec(BaselineId::Cnn), tiny_config(), TrainConfig{});
    Trainer t(b.model, b.config, b.spec.objective);
    auto lb = t.measure(random_images(4, 60), torch::tensor({0, 1, 2, 3}, torch::kLong), torch::zeros({4, 8}));
    auto v = lb.values();
    const auto& names = LossBreakdown::field_names();
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (names[i] == "l_ce" || names[i] == "total") {
            EXPECT_GT(v[i], 0.0);
        } else {
            EXPECT_EQ(v[i], 0.0) << names[i];
        }
    }
}

TEST(Baselines, ZeroDecoderReconstructsZeroImageExactly) {
    auto b = build_baseline(baseline_spec(BaselineId::AutoEncoder), tiny_config(), TrainConfig{});
    ASSERT_TRUE(b.model->has_decoder());
    auto t = maxmin_objective(b.model, torch::zeros({2, 3, 32, 32}), torch::tensor({0, 1}, torch::kLong),
                              torch::randn({2, 8}), b.config, b.spec.objective);
    EXPECT_EQ(t.l_recon.item<double>(), 0.0);
    auto out = b.model->decoder->forward(torch::randn({2, 8}));
    EXPECT_EQ(out.sizes(), (std::vector<std::int64_t>{2, 3, 32, 32}));
}

TEST(Baselines, PosAndNegOnlyKeepShapesAndParameterCounts) {
    auto count = [](BaselineId id) {
        auto b = build_baseline(baseline_spec(id), tiny_config(), TrainConfig{});
        std::vector<std::vector<std::int64_t>> shapes;
        for (auto& p : b.model->parameters()) shapes.push_back(p.sizes().vec());
        return shapes;
    };
    EXPECT_EQ(count(BaselineId::FullPosOnly), count(BaselineId::Full));
    EXPECT_EQ(count(BaselineId::FullNegOnly), count(BaselineId::Full));
    EXPECT_EQ(baseline_spec(BaselineId::FullPosOnly).objective.terms, PairTerms::PositiveOnly);
    EXPECT_EQ(baseline_spec(BaselineId::FullNegOnly).objective.terms, PairTerms::NegativeOnly);
}

TEST(Baselines, ZeroWeightFullEqualsCnn) {
    TrainConfig zero;
    zero.beta1 = zero.beta2 = zero.gamma = 0.0;
    auto full = build_baseline(baseline_spec(BaselineId::Full), tiny_config(), zero);
    auto cnn = build_baseline(baseline_spec(BaselineId::Cnn), tiny_config(), zero);
    auto x = random_images(6, 61);
    auto y = torch::tensor({0, 1, 2, 3, 4, 5}, torch::kLong);
    auto eps = torch::randn({6, 8}, at::detail::createCPUGenerator(62));
    auto a = Trainer(full.model, full.config, full.spec.objective).measure(x, y, eps);
    auto b = Trainer(cnn.model, cnn.config, cnn.spec.objective).measure(x, y, eps);
    EXPECT_NEAR(a.total, b.l_ce, 1e-6);
    EXPECT_NEAR(a.total, b.total, 1e-6);
}

TEST(Model, ParameterGroupsAppearOnce) {
    OsrModel m(tiny_config(), false);
    EXPECT_EQ(m->parameter_groups(), (std::vector<std::string>{"encoder", "classifier", "global_disc", "local_1t16",
                                                                "local_1t4", "local_4t4", "proj_4t4", "centers"}));
}
