#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "sve/tensor.hpp"

namespace sve {

struct Dataset {
    Tensor x;               // N x D
    std::vector<int> y;     // labels in [0, n_classes)
    int n_classes = 0;
    std::string split_tag;  // "train" / "test"
    std::string provenance; // generator descriptor or file hash

    std::size_t size() const { return y.size(); }
    std::size_t dim() const { return x.cols(); }
    void validate() const; // throws on label range / NaN / empty
};

// Gaussian-blob generator. Blob means sit on a deterministic ring of radius
// ring_radius in the first two feature dimensions, at angles 2*pi*b/n_blobs;
// remaining dimensions carry pure noise. With blobs_per_class > 1 the blobs
// wrap around the label set (blob b -> class b mod n_classes), which places
// same-class blobs on opposite sides of the ring, so the task stops being
// linearly separable.
struct ClusterSpec {
    int n_classes = 2;
    int blobs_per_class = 1;
    int n_per_blob = 100;
    std::size_t dim = 2;
    double spread = 0.1;
    double ring_radius = 1.5;
    std::uint64_t seed = 0;

    int n_blobs() const { return n_classes * blobs_per_class; }
    void validate() const;
};

Dataset make_clusters(const ClusterSpec& spec, const std::string& split_tag = "train");
// Compact form matching the common call shape.
Dataset make_clusters(int n_classes, int n_per_class, std::size_t dim, double spread,
                      std::uint64_t seed);

// Source/target task pair for the pretraining protocol. The source shares
// the input distribution; a fraction `overlap` of its blob means coincide
// with the target's while the rest are rotated by half a sector. Sample
// draws are disjoint (independent child seeds).
std::pair<Dataset, Dataset> source_target_split(const ClusterSpec& base, double overlap);

enum class CorruptionKind { GaussianNoise, UniformNoise, FeatureDropout, AffineShift };

struct CorruptionSpec {
    CorruptionKind kind = CorruptionKind::GaussianNoise;
    int severity = 1; // 1..5
    void validate() const;
};

const char* corruption_kind_name(CorruptionKind kind);
CorruptionKind corruption_kind_from_name(const std::string& name);

// Severity -> magnitude tables (strictly increasing per kind):
//   gaussian_noise:  additive sigma   {0.05, 0.1, 0.2, 0.4, 0.8}
//   uniform_noise:   half-width       {0.1, 0.2, 0.4, 0.8, 1.6}
//   feature_dropout: zeroing prob     {0.05, 0.1, 0.2, 0.35, 0.5}
//   affine_shift:    shift delta      {0.05, 0.1, 0.2, 0.4, 0.8}, scale 1 + delta/2
double corruption_magnitude(CorruptionKind kind, int severity);

// Applies the corruption at the mapped magnitude; labels pass through
// unchanged and the result is deterministic in (input, spec, seed).
Dataset corrupt(const Dataset& d, const CorruptionSpec& spec, std::uint64_t seed);

// In-distribution test set plus an OOD set from a second generator spec.
// Identical specs produce a degenerate pair; this is flagged with a warning
// on stderr and in the OOD provenance.
std::pair<Dataset, Dataset> ood_pair(const ClusterSpec& in_dist, const ClusterSpec& ood);

// --- File loaders ------------------------------------------------------

struct CsvSchema {
    std::string label_column;
    int n_classes = 0;
};

// CSV with a header row; the named label column holds integer labels, all
// other columns are features. Values are loaded raw (see standardize_*).
Dataset load_csv(const std::string& path, const CsvSchema& schema);

// Classic IDX/ubyte pair (big-endian magics 0x00000803 / 0x00000801);
// pixels are scaled to [0, 1].
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

struct FeatureStats {
    std::vector<double> mean;
    std::vector<double> std; // zero-variance columns get std 1
};

FeatureStats feature_stats(const Dataset& train);
void standardize_inplace(Dataset& d, const FeatureStats& stats);

// Loads both splits and standardizes each with the train split's statistics.
std::pair<Dataset, Dataset> load_csv_split(const std::string& train_path,
                                           const std::string& test_path, const CsvSchema& schema);

// FNV-1a 64 over a byte range; used for file provenance and config hashes.
std::uint64_t fnv1a64(const void* data, std::size_t len, std::uint64_t seed = 0xcbf29ce484222325ull);
std::string hex64(std::uint64_t v);

} // namespace sve
