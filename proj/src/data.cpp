#include "shedd/data.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <set>

#include <json.hpp>

#include "shedd/errors.hpp"
#include "shedd/rng.hpp"

namespace shedd {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Class patterns mix radial profiles (orientation free) with off-centre
// blobs (orientation dependent). With nuisance > 0 every sample is shown in
// a random dihedral orientation, so flips and quarter turns map a sample to
// another plausible sample of its class.
constexpr std::size_t kRadialBases = 6;
constexpr std::size_t kBlobBases = 6;
constexpr std::size_t kBases = kRadialBases + kBlobBases;
constexpr double kRadialWeight = 0.5;
constexpr double kBlobWidth = 0.3;
constexpr std::array<std::array<double, 2>, kBlobBases> kBlobCentres{
    {{-0.55, -0.30}, {0.40, -0.55}, {0.10, 0.45}, {-0.35, 0.50}, {0.60, 0.15}, {-0.05, -0.15}}};
// Rendered values are scaled then clamped into [-1, 1].
constexpr double kValueScale = 0.5;

std::vector<double> pattern_bases(std::size_t size) {
    std::vector<double> basis(kBases * size * size);
    const double center = (static_cast<double>(size) - 1.0) / 2.0;
    const double radius = static_cast<double>(size) / 2.0;
    for (std::size_t y = 0; y < size; ++y)
        for (std::size_t x = 0; x < size; ++x) {
            const double dy = (static_cast<double>(y) - center) / radius;
            const double dx = (static_cast<double>(x) - center) / radius;
            const double r = std::sqrt(dx * dx + dy * dy);
            for (std::size_t k = 0; k < kRadialBases; ++k)
                basis[(k * size + y) * size + x] =
                    kRadialWeight * std::cos(std::numbers::pi * static_cast<double>(k) * r) * std::exp(-r * r);
            for (std::size_t k = 0; k < kBlobBases; ++k) {
                const double ex = dx - kBlobCentres[k][0], ey = dy - kBlobCentres[k][1];
                basis[((kRadialBases + k) * size + y) * size + x] =
                    std::exp(-(ex * ex + ey * ey) / (2 * kBlobWidth * kBlobWidth));
            }
        }
    return basis;
}

// Element g of the dihedral group (g & 3 quarter turns, then a horizontal
// flip when g & 4) applied to an n x n plane.
void orient(const double* in, double* out, std::size_t n, unsigned g) {
    for (std::size_t y = 0; y < n; ++y)
        for (std::size_t x = 0; x < n; ++x) {
            std::size_t sy = y, sx = (g & 4) ? n - 1 - x : x;
            for (unsigned t = 0; t < (g & 3); ++t) {
                const std::size_t ny = sx, nx = n - 1 - sy;
                sy = ny;
                sx = nx;
            }
            out[y * n + x] = in[sy * n + sx];
        }
}

void validate_modality(const ModalityConfig& m, const char* which) {
    const std::string where = std::string("benchmark.") + which;
    if (m.channels == 0) throw ConfigError(where + ".channels must be positive");
    if (m.size < 2) throw ConfigError(where + ".size must be at least 2");
    if (m.samples_per_class == 0) throw ConfigError(where + ".samples_per_class must be positive");
    if (!(m.nuisance >= 0) || !(m.noise >= 0)) throw ConfigError(where + ": nuisance and noise must be nonnegative");
}

Dataset render_modality(const SyntheticBenchConfig& cfg, const ModalityConfig& m, std::size_t modality_index,
                        const std::vector<std::vector<double>>& prototypes) {
    const std::size_t c = m.channels, n = m.size, plane = n * n, latent = cfg.latent_dim;
    const std::size_t amplitudes = c * kBases;

    std::vector<double> render(amplitudes * latent);
    Rng render_rng(derive_seed(cfg.seed, {2, modality_index}));
    const double norm = 1.0 / std::sqrt(static_cast<double>(latent));
    for (auto& w : render) w = render_rng.normal() * norm;
    const auto basis = pattern_bases(n);

    std::vector<std::pair<std::size_t, std::size_t>> order;  // (class, index within class)
    for (std::size_t cls = 0; cls < cfg.num_classes; ++cls)
        for (std::size_t i = 0; i < m.samples_per_class; ++i) order.emplace_back(cls, i);
    Rng order_rng(derive_seed(cfg.seed, {4, modality_index}));
    order_rng.shuffle(order);

    Dataset ds;
    ds.manifest.modality = m.name;
    ds.manifest.channels = c;
    ds.manifest.height = n;
    ds.manifest.width = n;
    ds.manifest.num_classes = cfg.num_classes;
    ds.manifest.num_samples = order.size();
    ds.manifest.value_range = {-1.0f, 1.0f};
    ds.images.resize(order.size() * c * plane);
    ds.labels.resize(order.size());

    std::vector<double> code(latent), amp(amplitudes), img(c * plane), pattern(plane);
    for (std::size_t s = 0; s < order.size(); ++s) {
        const auto [cls, within] = order[s];
        Rng rng(derive_seed(cfg.seed, {3, modality_index, cls, within}));

        for (std::size_t j = 0; j < latent; ++j) code[j] = prototypes[cls][j] + m.nuisance * rng.normal();
        for (std::size_t a = 0; a < amplitudes; ++a) {
            double acc = 0;
            for (std::size_t j = 0; j < latent; ++j) acc += render[a * latent + j] * code[j];
            amp[a] = acc;
        }

        const unsigned orientation = m.nuisance > 0 ? static_cast<unsigned>(rng.below(8)) : 0;
        for (std::size_t ch = 0; ch < c; ++ch) {
            double* out = img.data() + ch * plane;
            std::fill(pattern.begin(), pattern.end(), 0.0);
            for (std::size_t k = 0; k < kBases; ++k) {
                const double a = amp[ch * kBases + k];
                const double* b = basis.data() + k * plane;
                for (std::size_t p = 0; p < plane; ++p) pattern[p] += a * b[p];
            }
            orient(pattern.data(), out, n, orientation);
            // Channel offset plus a randomly oriented plane wave.
            const double offset = m.nuisance * rng.normal();
            const double wave_amp = m.nuisance * rng.normal();
            const double freq = rng.uniform(0.5, 3.0);
            const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
            const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
            const double fx = freq * std::cos(angle) / static_cast<double>(n);
            const double fy = freq * std::sin(angle) / static_cast<double>(n);
            for (std::size_t y = 0; y < n; ++y)
                for (std::size_t x = 0; x < n; ++x)
                    out[y * n + x] +=
                        offset + wave_amp * std::cos(2.0 * std::numbers::pi * (fx * static_cast<double>(x) +
                                                                                fy * static_cast<double>(y)) +
                                                     phase);
        }
        for (auto& v : img) v += m.noise * rng.normal();

        float* dst = ds.images.data() + s * c * plane;
        for (std::size_t p = 0; p < c * plane; ++p)
            dst[p] = static_cast<float>(std::clamp(kValueScale * img[p], -1.0, 1.0));

        std::size_t label = cls;
        if (cfg.label_noise > 0 && rng.bernoulli(cfg.label_noise))
            label = (cls + 1 + static_cast<std::size_t>(rng.below(cfg.num_classes - 1))) % cfg.num_classes;
        ds.labels[s] = static_cast<std::int32_t>(label);
    }
    ds.manifest.checksum = dataset_checksum(ds);
    return ds;
}

template <class Word>
void append_le_bytes(std::uint64_t& hash, Word word) {
    for (std::size_t i = 0; i < sizeof(Word); ++i) {
        hash ^= (static_cast<std::uint64_t>(word) >> (8 * i)) & 0xffu;
        hash *= 0x100000001b3ULL;
    }
}

std::vector<char> read_bytes(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CorruptDatasetError("cannot open payload " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const fs::path& path, const void* data, std::size_t size) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
    if (!out) throw std::runtime_error("short write to " + path.string());
}

std::uint32_t load_le32(const char* p) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
    return v;
}

void store_le32(char* p, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) p[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
}

const std::set<std::string> kManifestFields{"modality",    "channels",  "height",    "width",
                                            "num_classes", "num_samples", "value_range", "data_file",
                                            "labels_file", "checksum"};

template <class V>
V manifest_field(const json& j, const char* key) {
    if (!j.contains(key)) throw ManifestError(std::string("manifest: missing field '") + key + "'");
    try {
        return j.at(key).get<V>();
    } catch (const json::exception&) {
        throw ManifestError(std::string("manifest: field '") + key + "' has the wrong type");
    }
}

}  // namespace

Tensor Dataset::gather(std::span<const std::size_t> indices) const {
    if (indices.empty()) throw ShapeError("Dataset::gather: empty index list");
    const std::size_t per = sample_numel();
    std::vector<float> out(indices.size() * per);
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= size()) throw std::out_of_range("Dataset::gather: index out of range");
        std::copy_n(images.begin() + static_cast<std::ptrdiff_t>(indices[i] * per), per,
                    out.begin() + static_cast<std::ptrdiff_t>(i * per));
    }
    return Tensor::from_data({indices.size(), manifest.channels, manifest.height, manifest.width}, std::move(out));
}

std::vector<std::size_t> Dataset::gather_labels(std::span<const std::size_t> indices) const {
    std::vector<std::size_t> out;
    out.reserve(indices.size());
    for (auto i : indices) out.push_back(static_cast<std::size_t>(labels.at(i)));
    return out;
}

Tensor Dataset::sample(std::size_t index) const {
    const std::size_t one[] = {index};
    auto batch = gather(one);
    return Tensor::from_data({manifest.channels, manifest.height, manifest.width}, batch.values());
}

std::vector<std::size_t> Dataset::indices_of_class(std::size_t cls) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (static_cast<std::size_t>(labels[i]) == cls) out.push_back(i);
    return out;
}

void SyntheticBenchConfig::validate() const {
    if (num_classes < 2) throw ConfigError("benchmark.num_classes must be at least 2");
    if (latent_dim == 0) throw ConfigError("benchmark.latent_dim must be positive");
    if (!(label_noise >= 0.0 && label_noise <= 1.0)) throw ConfigError("benchmark.label_noise must lie in [0, 1]");
    validate_modality(source, "source");
    validate_modality(target, "target");
}

std::pair<Dataset, Dataset> generate_synthetic_benchmark(const SyntheticBenchConfig& cfg) {
    cfg.validate();
    std::vector<std::vector<double>> prototypes(cfg.num_classes, std::vector<double>(cfg.latent_dim));
    Rng proto_rng(derive_seed(cfg.seed, {1}));
    for (auto& p : prototypes)
        for (auto& v : p) v = proto_rng.normal();
    return {render_modality(cfg, cfg.source, 0, prototypes), render_modality(cfg, cfg.target, 1, prototypes)};
}

std::string dataset_checksum(const Dataset& dataset) {
    std::uint64_t hash = 0xcbf29ce484222325ULL;
    for (float v : dataset.images) append_le_bytes(hash, std::bit_cast<std::uint32_t>(v));
    for (auto l : dataset.labels) append_le_bytes(hash, static_cast<std::uint32_t>(l));
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash));
    return buf;
}

fs::path write_dataset(Dataset& dataset, const fs::path& dir, const std::string& stem) {
    fs::create_directories(dir);
    auto& m = dataset.manifest;
    m.num_samples = dataset.size();
    m.data_file = stem + ".data.bin";
    m.labels_file = stem + ".labels.bin";
    m.checksum = dataset_checksum(dataset);

    std::vector<char> bytes(dataset.images.size() * 4);
    for (std::size_t i = 0; i < dataset.images.size(); ++i)
        store_le32(bytes.data() + 4 * i, std::bit_cast<std::uint32_t>(dataset.images[i]));
    write_bytes(dir / m.data_file, bytes.data(), bytes.size());
    bytes.assign(dataset.labels.size() * 4, 0);
    for (std::size_t i = 0; i < dataset.labels.size(); ++i)
        store_le32(bytes.data() + 4 * i, static_cast<std::uint32_t>(dataset.labels[i]));
    write_bytes(dir / m.labels_file, bytes.data(), bytes.size());

    const json j{{"modality", m.modality},
                 {"channels", m.channels},
                 {"height", m.height},
                 {"width", m.width},
                 {"num_classes", m.num_classes},
                 {"num_samples", m.num_samples},
                 {"value_range", {m.value_range.lo, m.value_range.hi}},
                 {"data_file", m.data_file},
                 {"labels_file", m.labels_file},
                 {"checksum", m.checksum}};
    const auto path = dir / (stem + ".json");
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << j.dump(2) << '\n';
    return path;
}

Dataset load_dataset(const fs::path& manifest_path) {
    std::ifstream in(manifest_path);
    if (!in) throw ManifestError("cannot open manifest " + manifest_path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ManifestError("manifest " + manifest_path.string() + " is not valid JSON: " + e.what());
    }
    if (!j.is_object()) throw ManifestError("manifest must be a JSON object");
    for (const auto& [key, _] : j.items())
        if (!kManifestFields.contains(key)) throw ManifestError("manifest: unknown field '" + key + "'");

    Dataset ds;
    auto& m = ds.manifest;
    m.modality = manifest_field<std::string>(j, "modality");
    m.channels = manifest_field<std::size_t>(j, "channels");
    m.height = manifest_field<std::size_t>(j, "height");
    m.width = manifest_field<std::size_t>(j, "width");
    m.num_classes = manifest_field<std::size_t>(j, "num_classes");
    m.num_samples = manifest_field<std::size_t>(j, "num_samples");
    const auto range = manifest_field<std::vector<float>>(j, "value_range");
    m.data_file = manifest_field<std::string>(j, "data_file");
    m.labels_file = manifest_field<std::string>(j, "labels_file");
    m.checksum = manifest_field<std::string>(j, "checksum");
    if (range.size() != 2 || !(range[0] < range[1]))
        throw ManifestError("manifest: value_range must be [lo, hi] with lo < hi");
    m.value_range = {range[0], range[1]};
    if (m.channels == 0 || m.height == 0 || m.width == 0 || m.num_samples == 0 || m.num_classes < 2)
        throw ManifestError("manifest: geometry, sample count and class count must be positive (C >= 2)");

    const auto base = manifest_path.parent_path();
    const auto data = read_bytes(base / m.data_file);
    const auto labels = read_bytes(base / m.labels_file);
    const std::size_t expected = m.num_samples * m.channels * m.height * m.width;
    if (data.size() != expected * 4)
        throw CorruptDatasetError("payload " + m.data_file + " holds " + std::to_string(data.size()) +
                                  " bytes, manifest implies " + std::to_string(expected * 4));
    if (labels.size() != m.num_samples * 4)
        throw CorruptDatasetError("labels " + m.labels_file + " holds " + std::to_string(labels.size()) +
                                  " bytes, manifest implies " + std::to_string(m.num_samples * 4));

    ds.images.resize(expected);
    for (std::size_t i = 0; i < expected; ++i) ds.images[i] = std::bit_cast<float>(load_le32(data.data() + 4 * i));
    ds.labels.resize(m.num_samples);
    for (std::size_t i = 0; i < m.num_samples; ++i)
        ds.labels[i] = static_cast<std::int32_t>(load_le32(labels.data() + 4 * i));

    if (dataset_checksum(ds) != m.checksum)
        throw CorruptDatasetError("checksum mismatch for " + manifest_path.string());
    for (auto l : ds.labels)
        if (l < 0 || static_cast<std::size_t>(l) >= m.num_classes)
            throw ManifestError("label " + std::to_string(l) + " outside [0," + std::to_string(m.num_classes) + ")");
    for (auto& v : ds.images) v = std::clamp(v, m.value_range.lo, m.value_range.hi);
    return ds;
}

TargetSplit make_splits(const Dataset& target, std::size_t per_class, std::uint64_t seed) {
    TargetSplit split;
    std::vector<bool> chosen(target.size(), false);
    for (std::size_t cls = 0; cls < target.manifest.num_classes; ++cls) {
        auto members = target.indices_of_class(cls);
        if (members.size() < per_class)
            throw InsufficientDataError("class " + std::to_string(cls) + " has " + std::to_string(members.size()) +
                                        " samples, " + std::to_string(per_class) + " labelled ones requested");
        Rng rng(derive_seed(seed, {cls}));
        rng.shuffle(members);
        for (std::size_t i = 0; i < per_class; ++i) chosen[members[i]] = true;
    }
    for (std::size_t i = 0; i < target.size(); ++i) (chosen[i] ? split.labelled : split.unlabelled).push_back(i);
    return split;
}

BatchSampler::BatchSampler(std::size_t source_count, std::vector<std::size_t> labelled,
                           std::vector<std::size_t> unlabelled, std::size_t batch_size, std::uint64_t seed)
    : source_count_(source_count),
      labelled_(std::move(labelled)),
      unlabelled_(std::move(unlabelled)),
      batch_size_(batch_size),
      seed_(seed) {
    if (batch_size_ == 0) throw ConfigError("batch_size must be at least 1");
    if (source_count_ == 0 || labelled_.empty() || unlabelled_.empty())
        throw InsufficientDataError("batch sampler: source, labelled and unlabelled sets must be nonempty");
    if (source_count_ < batch_size_)
        throw InsufficientDataError("batch sampler: " + std::to_string(source_count_) +
                                    " source samples cannot fill one batch of " + std::to_string(batch_size_));
}

std::vector<BatchIndices> BatchSampler::epoch(std::size_t epoch_index) const {
    Rng rng(derive_seed(seed_, {epoch_index}));
    std::vector<std::size_t> order(source_count_);
    for (std::size_t i = 0; i < source_count_; ++i) order[i] = i;
    rng.shuffle(order);

    std::vector<BatchIndices> batches(iterations_per_epoch());
    for (std::size_t it = 0; it < batches.size(); ++it) {
        auto& b = batches[it];
        b.source.assign(order.begin() + static_cast<std::ptrdiff_t>(it * batch_size_),
                        order.begin() + static_cast<std::ptrdiff_t>((it + 1) * batch_size_));
        b.labelled.resize(batch_size_);
        b.unlabelled.resize(batch_size_);
        for (auto& i : b.labelled) i = labelled_[rng.below(labelled_.size())];
        for (auto& i : b.unlabelled) i = unlabelled_[rng.below(unlabelled_.size())];
    }
    return batches;
}

}  // namespace shedd
