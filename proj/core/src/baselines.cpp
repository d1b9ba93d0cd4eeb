#include "m2iosr/baselines.hpp"

#include <algorithm>
#include <ostream>

#include "m2iosr/errors.hpp"
#include "m2iosr/openset_inference.hpp"

namespace m2iosr {

namespace {

struct Named {
    BaselineId id;
    const char* name;
};

constexpr Named kNames[] = {
    {BaselineId::Cnn, "I-CNN"},
    {BaselineId::AutoEncoder, "II-AE"},
    {BaselineId::Dim, "III-DIM"},
    {BaselineId::DimKl, "IV-DIM+KL"},
    {BaselineId::DimKl1t4, "V-+L1t4"},
    {BaselineId::DimKl4t4, "VI-+L4t4"},
    {BaselineId::Full, "VII-full"},
    {BaselineId::FullPosOnly, "VII-pos-only"},
    {BaselineId::FullNegOnly, "VII-neg-only"},
};

} // namespace

std::string to_string(BaselineId id) {
    for (const auto& n : kNames) {
        if (n.id == id) return n.name;
    }
    return "?";
}

BaselineId baseline_from_string(const std::string& name) {
    for (const auto& n : kNames) {
        if (name == n.name) return n.id;
    }
    throw ConfigError("unknown baseline '" + name + "'");
}

std::vector<BaselineId> all_baselines() {
    std::vector<BaselineId> ids;
    for (const auto& n : kNames) ids.push_back(n.id);
    return ids;
}

BaselineSpec baseline_spec(BaselineId id) {
    BaselineSpec s;
    s.id = id;
    auto& o = s.objective;
    switch (id) {
    case BaselineId::Cnn:
        o = ObjectiveSpec{false, false, false, false, false, false, PairTerms::Both};
        break;
    case BaselineId::AutoEncoder:
        o = ObjectiveSpec{false, false, false, false, false, true, PairTerms::Both};
        break;
    case BaselineId::Dim:
        o = ObjectiveSpec{true, true, false, false, false, false, PairTerms::Both};
        break;
    case BaselineId::DimKl:
        o = ObjectiveSpec{true, true, false, false, true, false, PairTerms::Both};
        break;
    case BaselineId::DimKl1t4:
        o = ObjectiveSpec{true, true, true, false, true, false, PairTerms::Both};
        break;
    case BaselineId::DimKl4t4:
        o = ObjectiveSpec{true, true, false, true, true, false, PairTerms::Both};
        break;
    case BaselineId::Full:
        break;
    case BaselineId::FullPosOnly:
        o.terms = PairTerms::PositiveOnly;
        break;
    case BaselineId::FullNegOnly:
        o.terms = PairTerms::NegativeOnly;
        break;
    }
    return s;
}

TrainConfig BaselineSpec::apply(const TrainConfig& base) const {
    TrainConfig c = base;
    switch (id) {
    case BaselineId::Cnn:
    case BaselineId::AutoEncoder:
        c.beta1 = c.beta2 = c.gamma = 0.0;
        break;
    case BaselineId::Dim:
        c.gamma = 0.0;
        c.local = LocalWeights{1.0, 0.0, 0.0};
        break;
    case BaselineId::DimKl:
        c.local = LocalWeights{1.0, 0.0, 0.0};
        break;
    case BaselineId::DimKl1t4:
        c.local = LocalWeights{0.7, 0.3, 0.0};
        break;
    case BaselineId::DimKl4t4:
        c.local = LocalWeights{0.7, 0.0, 0.3};
        break;
    case BaselineId::Full:
    case BaselineId::FullPosOnly:
    case BaselineId::FullNegOnly:
        c.local = LocalWeights{0.7, 0.1, 0.2};
        break;
    }
    return c;
}

BuiltBaseline build_baseline(const BaselineSpec& spec, const EncoderConfig& encoder, const TrainConfig& base) {
    BuiltBaseline b;
    b.spec = spec;
    b.config = spec.apply(base);
    b.config.validate();
    b.model = make_model(encoder, b.config.seed, spec.objective.reconstruction);
    if (spec.objective.reconstruction) {
        b.model->decoder->zero_init();
    }
    return b;
}

TrialData prepare_trial(const AblationSetup& setup, std::uint64_t seed) {
    TrialData t;
    const auto ids = class_ids(setup.train);
    t.split = make_split(setup.dataset, ids, setup.num_known, seed);

    t.train = select_classes(cap_per_class(setup.train, setup.max_train_per_class), t.split.known_classes);
    t.known_test = select_classes(setup.test, t.split.known_classes);

    std::vector<std::size_t> unknown_idx;
    for (std::size_t i = 0; i < setup.test.size(); ++i) {
        const auto& u = t.split.unknown.classes;
        if (std::find(u.begin(), u.end(), setup.test.labels[i]) != u.end()) unknown_idx.push_back(i);
    }
    t.pools = nested_pools(setup.test.gather(unknown_idx), t.split.unknown.classes, setup.pool_sizes);
    return t;
}

std::vector<AblationRow> run_ablation(const AblationSetup& setup, std::ostream* progress) {
    std::vector<AblationRow> rows;
    for (auto seed : setup.seeds) {
        const auto trial = prepare_trial(setup, seed);
        const auto hash = split_hash(trial.split);
        for (auto id : setup.baselines) {
            TrainConfig base = setup.train_config;
            base.seed = seed;
            EncoderConfig enc = setup.encoder;
            enc.num_known = setup.num_known;
            auto built = build_baseline(baseline_spec(id), enc, base);
            if (progress) *progress << "== " << to_string(id) << " seed " << seed << " split " << hash << "\n";
            Trainer trainer(built.model, built.config, built.spec.objective);
            trainer.train(trial.train, progress);

            const double acc = accuracy(predict_closed(built.model, trial.known_test), trial.known_test.labels);
            Predictor predictor = [&](const ImageBatch& images, double tau) {
                return predict(built.model, images, tau);
            };
            auto curve = sweep_openness(predictor, trial.known_test, trial.split.known_classes, trial.pools,
                                        setup.tau);
            for (const auto& pt : curve) {
                rows.push_back(AblationRow{to_string(id), seed, hash, pt.unknown_classes, pt.openness, pt.macro_f1,
                                           acc});
                if (progress) {
                    *progress << "   unknown classes " << pt.unknown_classes << " openness " << pt.openness
                              << " macro-F1 " << pt.macro_f1 << " closed acc " << acc << "\n";
                }
            }
        }
    }
    return rows;
}

} // namespace m2iosr
