// Synthetic open-set data: identity clusters on the unit sphere, graded
// corruption operators, OOD samples, and verification-pair construction.
#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "rts/stochastic.hpp"

namespace rts::datasynth {

enum class NoiseKind { Clean, Additive, SaltPepper, Maskout, Mixup };
enum class Split { Train, Test, Ood };

const char* noise_kind_name(NoiseKind k);
NoiseKind noise_kind_from_name(const std::string& name);
const char* split_name(Split s);
Split split_from_name(const std::string& name);

inline constexpr int kOodLabel = -1;

struct Sample {
    std::vector<double> x;
    int label = kOodLabel;  // identity id, or kOodLabel for OOD
    NoiseKind noise_kind = NoiseKind::Clean;
    double noise_level = 0.0;
    Split split = Split::Train;
};

struct Dataset {
    std::vector<Sample> samples;
    int num_identities = 0;
    int input_dim = 0;

    std::vector<std::size_t> indices_of(Split s) const;
};

// Index pairs into Dataset::samples.
struct PairSet {
    std::vector<std::pair<std::size_t, std::size_t>> genuine;
    std::vector<std::pair<std::size_t, std::size_t>> impostor;
};

enum class OodMode { UniformSphere, ShiftedClusters };
OodMode ood_mode_from_name(const std::string& name);
const char* ood_mode_name(OodMode m);

struct DataConfig {
    int num_identities = 50;
    int input_dim = 32;
    int samples_per_identity = 40;
    // Cluster tightness mirrors the face-recognition regime the margin head
    // expects: intra-class angles well below the ~90 degree inter-class gaps.
    double spread = 0.04;
    double corrupt_fraction = 0.2;  // of the train split
    std::vector<NoiseKind> corrupt_kinds{NoiseKind::Additive};
    std::vector<double> corrupt_levels{0.3, 0.6, 1.0};
    int ood_count = 500;
    OodMode ood_mode = OodMode::UniformSphere;
    double ood_shift = 0.5;     // ShiftedClusters: displacement off training prototypes
    int ood_clusters = 5;
};

// Identity clusters with a train/test split (last max(2, per_id/5) samples
// of each identity go to test). Prototypes may be supplied for tests.
Dataset gen_identities(stochastic::RngStream& rng, int num_identities, int input_dim,
                       int per_identity, double spread);
Dataset gen_identities_with_prototypes(stochastic::RngStream& rng,
                                       const std::vector<std::vector<double>>& prototypes,
                                       int per_identity, double spread);

std::vector<double> corrupt(const std::vector<double>& x, NoiseKind kind, double level,
                            stochastic::RngStream& rng);

// For ShiftedClusters, fresh prototypes are training prototypes displaced by
// `shift` units of gaussian noise (then renormalized): near-manifold OOD, the
// analogue of non-face images that still pass a face detector. With no
// anchors given, fresh prototypes are drawn uniformly instead.
struct OodClusterOptions {
    double cluster_spread = 0.04;
    int cluster_count = 5;
    double shift = 0.5;
    const std::vector<std::vector<double>>* anchors = nullptr;
};

std::vector<Sample> gen_ood(stochastic::RngStream& rng, int n, int input_dim, OodMode mode,
                            const OodClusterOptions& opts = {});

// Full generator used by the CLI: identities + train-split corruption + OOD.
// All randomness comes from `seed` through named substreams.
Dataset build_dataset(std::uint64_t seed, const DataConfig& cfg);

PairSet build_pairs(const Dataset& ds, std::size_t max_pairs, stochastic::RngStream& rng);

// Line-delimited text format: one sample per line,
//   split label|OOD noise_kind noise_level x_0 ... x_{d-1}
// with doubles printed round-trip exactly.
void export_dataset(const Dataset& ds, std::ostream& out);
void export_dataset_file(const Dataset& ds, const std::string& path);
Dataset import_dataset(std::istream& in);
Dataset import_dataset_file(const std::string& path);

}  // namespace rts::datasynth
