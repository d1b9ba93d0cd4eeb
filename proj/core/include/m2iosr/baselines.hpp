#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "m2iosr/datasets.hpp"
#include "m2iosr/encoder.hpp"
#include "m2iosr/evaluation.hpp"
#include "m2iosr/model.hpp"
#include "m2iosr/trainer.hpp"

namespace m2iosr {

/// The ablation ladder, from a plain CNN up to the full method.
enum class BaselineId {
    Cnn,        // I:   cross-entropy only
    AutoEncoder,// II:  + decoder reconstruction
    Dim,        // III: global MI + 1t16 local MI, no latent constraint
    DimKl,      // IV:  III + class-conditional KL
    DimKl1t4,   // V:   IV + 1t4 local MI
    DimKl4t4,   // VI:  IV + 4t4 local MI
    Full,       // VII: every MI term + KL
    FullPosOnly,
    FullNegOnly,
};

std::string to_string(BaselineId id);
BaselineId baseline_from_string(const std::string& name);
std::vector<BaselineId> all_baselines();

struct BaselineSpec {
    BaselineId id = BaselineId::Full;
    ObjectiveSpec objective;

    /// Copies `base` and applies this baseline's loss-weight overrides.
    TrainConfig apply(const TrainConfig& base) const;
};

BaselineSpec baseline_spec(BaselineId id);

struct BuiltBaseline {
    BaselineSpec spec;
    OsrModel model{nullptr};
    TrainConfig config;
};

/// Model and objective for one baseline, initialized from config.seed.
BuiltBaseline build_baseline(const BaselineSpec& spec, const EncoderConfig& encoder, const TrainConfig& base);

struct AblationSetup {
    std::string dataset;
    ImageBatch train; // original class ids as labels
    ImageBatch test;  // original class ids as labels
    int num_known = 6;
    std::size_t max_train_per_class = 1000;
    EncoderConfig encoder;
    TrainConfig train_config;
    std::vector<BaselineId> baselines;
    std::vector<std::uint64_t> seeds;
    std::vector<int> pool_sizes; // unknown class counts, drawn from the held-out classes
    double tau = 0.95;
};

struct AblationRow {
    std::string baseline;
    std::uint64_t seed = 0;
    std::string split_hash;
    int unknown_classes = 0;
    double openness = 0.0;
    double macro_f1 = 0.0;
    double closed_set_accuracy = 0.0;
};

/// Known/unknown partitions for one trial seed, ready for training and sweeping.
struct TrialData {
    SplitSpec split;
    ImageBatch train;      // known classes, labels 0..K-1
    ImageBatch known_test; // known classes, labels 0..K-1
    std::vector<UnknownPool> pools;
};

TrialData prepare_trial(const AblationSetup& setup, std::uint64_t seed);

/// Trains every baseline on every seed's split with identical data order and
/// initialization seed, then sweeps openness. Rows are ordered by seed,
/// baseline, pool.
std::vector<AblationRow> run_ablation(const AblationSetup& setup, std::ostream* progress = nullptr);

} // namespace m2iosr
