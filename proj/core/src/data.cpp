#include "sve/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>
#include <sstream>

#include "sve/error.hpp"
#include "sve/rng.hpp"

namespace sve {

void Dataset::validate() const {
    if (y.empty()) throw DimensionError("dataset: empty");
    if (x.rows() != y.size()) throw DimensionError("dataset: x rows != label count");
    if (n_classes < 1) throw ConfigError("dataset: n_classes must be >= 1");
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (y[i] < 0 || y[i] >= n_classes) {
            throw IndexError("dataset: label " + std::to_string(y[i]) + " out of range at row " +
                             std::to_string(i));
        }
    }
    if (!x.all_finite()) throw NumericError("dataset: non-finite feature value");
}

void ClusterSpec::validate() const {
    if (n_classes < 2) throw ConfigError("clusters.n_classes: must be >= 2");
    if (blobs_per_class < 1) throw ConfigError("clusters.blobs_per_class: must be >= 1");
    if (n_per_blob < 1) throw ConfigError("clusters.n_per_blob: must be >= 1");
    if (dim < 2) throw ConfigError("clusters.dim: must be >= 2");
    if (spread < 0.0) throw ConfigError("clusters.spread: must be >= 0");
}

namespace {

std::vector<double> blob_mean(const ClusterSpec& spec, int blob, double angle_offset) {
    std::vector<double> mean(spec.dim, 0.0);
    const double angle = 2.0 * M_PI * static_cast<double>(blob) / static_cast<double>(spec.n_blobs()) +
                         angle_offset;
    mean[0] = spec.ring_radius * std::cos(angle);
    mean[1] = spec.ring_radius * std::sin(angle);
    return mean;
}

Dataset generate_clusters(const ClusterSpec& spec, const std::vector<double>& angle_offsets,
                          const std::string& split_tag, const std::string& provenance) {
    spec.validate();
    const int blobs = spec.n_blobs();
    const std::size_t n = static_cast<std::size_t>(blobs) * static_cast<std::size_t>(spec.n_per_blob);
    Tensor x = Tensor::zeros({n, spec.dim});
    std::vector<int> y(n);

    Rng root(spec.seed);
    std::size_t row = 0;
    for (int b = 0; b < blobs; ++b) {
        Rng blob_rng = root.split(static_cast<std::uint64_t>(b) + 1);
        const std::vector<double> mean = blob_mean(spec, b, angle_offsets[static_cast<std::size_t>(b)]);
        for (int k = 0; k < spec.n_per_blob; ++k, ++row) {
            const std::vector<double> noise = blob_rng.normal_vec(spec.dim, 0.0, spec.spread);
            for (std::size_t d = 0; d < spec.dim; ++d) x.at(row, d) = mean[d] + noise[d];
            y[row] = b % spec.n_classes;
        }
    }

    // Deterministic shuffle so batches mix blobs.
    Rng shuffle_rng = root.split(0x73687566ull); // "shuf"
    const std::vector<std::size_t> perm = shuffle_rng.permutation(n);
    Tensor xs = Tensor::zeros({n, spec.dim});
    std::vector<int> ys(n);
    for (std::size_t i = 0; i < n; ++i) {
        ys[i] = y[perm[i]];
        for (std::size_t d = 0; d < spec.dim; ++d) xs.at(i, d) = x.at(perm[i], d);
    }

    Dataset ds;
    ds.x = std::move(xs);
    ds.y = std::move(ys);
    ds.n_classes = spec.n_classes;
    ds.split_tag = split_tag;
    ds.provenance = provenance;
    return ds;
}

std::string cluster_provenance(const ClusterSpec& spec, const char* variant) {
    std::ostringstream os;
    os << "clusters:" << variant << ":classes=" << spec.n_classes << ":blobs_per_class="
       << spec.blobs_per_class << ":n_per_blob=" << spec.n_per_blob << ":dim=" << spec.dim
       << ":spread=" << spec.spread << ":radius=" << spec.ring_radius << ":seed=" << spec.seed;
    return os.str();
}

} // namespace

Dataset make_clusters(const ClusterSpec& spec, const std::string& split_tag) {
    const std::vector<double> offsets(static_cast<std::size_t>(spec.n_blobs()), 0.0);
    return generate_clusters(spec, offsets, split_tag, cluster_provenance(spec, "target"));
}

Dataset make_clusters(int n_classes, int n_per_class, std::size_t dim, double spread,
                      std::uint64_t seed) {
    ClusterSpec spec;
    spec.n_classes = n_classes;
    spec.blobs_per_class = 1;
    spec.n_per_blob = n_per_class;
    spec.dim = dim;
    spec.spread = spread;
    spec.seed = seed;
    return make_clusters(spec, "train");
}

std::pair<Dataset, Dataset> source_target_split(const ClusterSpec& base, double overlap) {
    if (overlap < 0.0 || overlap > 1.0) throw ConfigError("source_target_split: overlap must be in [0,1]");
    base.validate();

    Dataset target = make_clusters(base, "train");

    const int blobs = base.n_blobs();
    const int shared = static_cast<int>(std::lround(overlap * static_cast<double>(blobs)));
    const double half_sector = M_PI / static_cast<double>(blobs);
    std::vector<double> offsets(static_cast<std::size_t>(blobs), 0.0);
    for (int b = shared; b < blobs; ++b) offsets[static_cast<std::size_t>(b)] = half_sector;

    ClusterSpec source_spec = base;
    source_spec.seed = fnv1a64("source", 6, base.seed);
    Dataset source =
        generate_clusters(source_spec, offsets, "train", cluster_provenance(source_spec, "source"));
    return {std::move(source), std::move(target)};
}

void CorruptionSpec::validate() const {
    if (severity < 1 || severity > 5) throw ConfigError("corruption.severity: must be in [1,5]");
}

const char* corruption_kind_name(CorruptionKind kind) {
    switch (kind) {
        case CorruptionKind::GaussianNoise: return "gaussian_noise";
        case CorruptionKind::UniformNoise: return "uniform_noise";
        case CorruptionKind::FeatureDropout: return "feature_dropout";
        case CorruptionKind::AffineShift: return "affine_shift";
    }
    throw ConfigError("unknown corruption kind");
}

CorruptionKind corruption_kind_from_name(const std::string& name) {
    if (name == "gaussian_noise") return CorruptionKind::GaussianNoise;
    if (name == "uniform_noise") return CorruptionKind::UniformNoise;
    if (name == "feature_dropout") return CorruptionKind::FeatureDropout;
    if (name == "affine_shift") return CorruptionKind::AffineShift;
    throw ConfigError("corruption.kind: unknown name '" + name + "'");
}

double corruption_magnitude(CorruptionKind kind, int severity) {
    CorruptionSpec{kind, severity}.validate();
    static const double gaussian[5] = {0.05, 0.1, 0.2, 0.4, 0.8};
    static const double uniform[5] = {0.1, 0.2, 0.4, 0.8, 1.6};
    static const double drop[5] = {0.05, 0.1, 0.2, 0.35, 0.5};
    static const double affine[5] = {0.05, 0.1, 0.2, 0.4, 0.8};
    const int s = severity - 1;
    switch (kind) {
        case CorruptionKind::GaussianNoise: return gaussian[s];
        case CorruptionKind::UniformNoise: return uniform[s];
        case CorruptionKind::FeatureDropout: return drop[s];
        case CorruptionKind::AffineShift: return affine[s];
    }
    throw ConfigError("unknown corruption kind");
}

Dataset corrupt(const Dataset& d, const CorruptionSpec& spec, std::uint64_t seed) {
    spec.validate();
    const double mag = corruption_magnitude(spec.kind, spec.severity);
    const std::size_t n = d.size(), dim = d.dim();
    Dataset out;
    out.x = d.x.detached_copy();
    out.y = d.y;
    out.n_classes = d.n_classes;
    out.split_tag = d.split_tag;
    out.provenance = d.provenance + "|corrupt:" + corruption_kind_name(spec.kind) + ":s" +
                     std::to_string(spec.severity) + ":seed=" + std::to_string(seed);

    Rng rng(seed);
    auto& xv = out.x.mutable_data();
    switch (spec.kind) {
        case CorruptionKind::GaussianNoise: {
            const std::vector<double> noise = rng.normal_vec(n * dim, 0.0, mag);
            for (std::size_t i = 0; i < xv.size(); ++i) xv[i] += noise[i];
            break;
        }
        case CorruptionKind::UniformNoise: {
            for (double& v : xv) v += rng.uniform_range(-mag, mag);
            break;
        }
        case CorruptionKind::FeatureDropout: {
            for (double& v : xv) {
                if (rng.uniform() < mag) v = 0.0;
            }
            break;
        }
        case CorruptionKind::AffineShift: {
            const double scale = 1.0 + mag / 2.0;
            for (double& v : xv) v = scale * v + mag;
            break;
        }
    }
    return out;
}

std::pair<Dataset, Dataset> ood_pair(const ClusterSpec& in_dist, const ClusterSpec& ood) {
    Dataset id_set = make_clusters(in_dist, "test");
    Dataset ood_set = make_clusters(ood, "test");
    const bool degenerate = in_dist.n_classes == ood.n_classes &&
                            in_dist.blobs_per_class == ood.blobs_per_class &&
                            in_dist.dim == ood.dim && in_dist.spread == ood.spread &&
                            in_dist.ring_radius == ood.ring_radius;
    if (degenerate) {
        std::cerr << "warning: ood_pair specs are identical; OOD split is degenerate\n";
        ood_set.provenance += "|degenerate";
    }
    ood_set.provenance += "|ood";
    return {std::move(id_set), std::move(ood_set)};
}

// --- Loaders -------------------------------------------------------------

std::uint64_t fnv1a64(const void* data, std::size_t len, std::uint64_t seed) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = seed;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<std::size_t>(i)] = digits[v & 0xF];
        v >>= 4;
    }
    return s;
}

namespace {

std::string read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open file: " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    fields.push_back(cur);
    return fields;
}

} // namespace

Dataset load_csv(const std::string& path, const CsvSchema& schema) {
    if (schema.n_classes < 1) throw ConfigError("csv schema: n_classes must be >= 1");
    const std::string bytes = read_file_bytes(path);
    std::istringstream in(bytes);

    std::string line;
    if (!std::getline(in, line)) throw ParseError(path + ":1: empty file");
    const std::vector<std::string> header = split_csv_line(line);
    std::size_t label_col = header.size();
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == schema.label_column) label_col = i;
    }
    if (label_col == header.size()) {
        throw ParseError(path + ":1: label column '" + schema.label_column + "' not found in header");
    }
    const std::size_t dim = header.size() - 1;
    if (dim == 0) throw ParseError(path + ":1: no feature columns");

    std::vector<double> values;
    std::vector<int> labels;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const std::vector<std::string> fields = split_csv_line(line);
        if (fields.size() != header.size()) {
            throw ParseError(path + ":" + std::to_string(line_no) + ": expected " +
                             std::to_string(header.size()) + " fields, got " +
                             std::to_string(fields.size()));
        }
        for (std::size_t i = 0; i < fields.size(); ++i) {
            std::size_t consumed = 0;
            double v;
            try {
                v = std::stod(fields[i], &consumed);
            } catch (const std::exception&) {
                throw ParseError(path + ":" + std::to_string(line_no) + ": field '" + fields[i] +
                                 "' is not numeric");
            }
            if (consumed != fields[i].size()) {
                throw ParseError(path + ":" + std::to_string(line_no) + ": trailing characters in '" +
                                 fields[i] + "'");
            }
            if (i == label_col) {
                const int label = static_cast<int>(v);
                if (static_cast<double>(label) != v) {
                    throw ParseError(path + ":" + std::to_string(line_no) + ": label is not an integer");
                }
                if (label < 0 || label >= schema.n_classes) {
                    throw IndexError(path + ":" + std::to_string(line_no) + ": label " +
                                     std::to_string(label) + " out of range [0," +
                                     std::to_string(schema.n_classes) + ")");
                }
                labels.push_back(label);
            } else {
                if (!std::isfinite(v)) {
                    throw NumericError(path + ":" + std::to_string(line_no) + ": non-finite feature");
                }
                values.push_back(v);
            }
        }
    }
    if (labels.empty()) throw ParseError(path + ": no data rows");

    Dataset ds;
    ds.x = Tensor::from_data({labels.size(), dim}, std::move(values));
    ds.y = std::move(labels);
    ds.n_classes = schema.n_classes;
    ds.split_tag = "train";
    ds.provenance = "csv:" + hex64(fnv1a64(bytes.data(), bytes.size()));
    return ds;
}

namespace {

std::uint32_t read_u32_be(std::istream& in, const std::string& path) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw FormatError(path + ": truncated IDX header");
    return (static_cast<std::uint32_t>(b[0]) << 24) | (static_cast<std::uint32_t>(b[1]) << 16) |
           (static_cast<std::uint32_t>(b[2]) << 8) | static_cast<std::uint32_t>(b[3]);
}

} // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    const std::string ibytes = read_file_bytes(images_path);
    const std::string lbytes = read_file_bytes(labels_path);
    std::istringstream img(ibytes), lab(lbytes);

    if (read_u32_be(img, images_path) != 0x00000803u) {
        throw FormatError(images_path + ": bad IDX image magic (expected 0x00000803)");
    }
    const std::uint32_t n = read_u32_be(img, images_path);
    const std::uint32_t rows = read_u32_be(img, images_path);
    const std::uint32_t cols = read_u32_be(img, images_path);

    if (read_u32_be(lab, labels_path) != 0x00000801u) {
        throw FormatError(labels_path + ": bad IDX label magic (expected 0x00000801)");
    }
    const std::uint32_t nl = read_u32_be(lab, labels_path);
    if (n != nl) throw FormatError("IDX image/label counts differ");

    const std::size_t dim = static_cast<std::size_t>(rows) * cols;
    std::vector<double> values(static_cast<std::size_t>(n) * dim);
    std::vector<char> buf(dim);
    for (std::uint32_t i = 0; i < n; ++i) {
        img.read(buf.data(), static_cast<std::streamsize>(dim));
        if (!img) throw FormatError(images_path + ": truncated pixel payload");
        for (std::size_t j = 0; j < dim; ++j) {
            values[static_cast<std::size_t>(i) * dim + j] =
                static_cast<double>(static_cast<unsigned char>(buf[j])) / 255.0;
        }
    }
    std::vector<int> labels(n);
    int max_label = 0;
    for (std::uint32_t i = 0; i < n; ++i) {
        char c;
        lab.read(&c, 1);
        if (!lab) throw FormatError(labels_path + ": truncated label payload");
        labels[i] = static_cast<unsigned char>(c);
        max_label = std::max(max_label, labels[i]);
    }

    Dataset ds;
    ds.x = Tensor::from_data({static_cast<std::size_t>(n), dim}, std::move(values));
    ds.y = std::move(labels);
    ds.n_classes = max_label + 1;
    ds.split_tag = "train";
    ds.provenance = "idx:" + hex64(fnv1a64(ibytes.data(), ibytes.size())) + ":" +
                    hex64(fnv1a64(lbytes.data(), lbytes.size()));
    return ds;
}

FeatureStats feature_stats(const Dataset& train) {
    const std::size_t n = train.size(), d = train.dim();
    FeatureStats st;
    st.mean.assign(d, 0.0);
    st.std.assign(d, 1.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) st.mean[j] += train.x.at(i, j);
    for (double& m : st.mean) m /= static_cast<double>(n);
    std::vector<double> var(d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            const double c = train.x.at(i, j) - st.mean[j];
            var[j] += c * c;
        }
    }
    for (std::size_t j = 0; j < d; ++j) {
        const double s = std::sqrt(var[j] / static_cast<double>(n));
        st.std[j] = s > 0.0 ? s : 1.0;
    }
    return st;
}

void standardize_inplace(Dataset& d, const FeatureStats& stats) {
    const std::size_t n = d.size(), dim = d.dim();
    if (stats.mean.size() != dim) throw DimensionError("standardize: stats dimension mismatch");
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < dim; ++j) d.x.at(i, j) = (d.x.at(i, j) - stats.mean[j]) / stats.std[j];
}

std::pair<Dataset, Dataset> load_csv_split(const std::string& train_path,
                                           const std::string& test_path, const CsvSchema& schema) {
    Dataset train = load_csv(train_path, schema);
    Dataset test = load_csv(test_path, schema);
    train.split_tag = "train";
    test.split_tag = "test";
    // Test features use the train split's statistics only.
    const FeatureStats stats = feature_stats(train);
    standardize_inplace(train, stats);
    standardize_inplace(test, stats);
    return {std::move(train), std::move(test)};
}

} // namespace sve
