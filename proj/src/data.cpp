#include "pointgcn/data.hpp"

#include "pointgcn/random.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

namespace pointgcn {

namespace fs = std::filesystem;

std::vector<std::size_t> Dataset::class_counts() const {
    std::vector<std::size_t> counts(class_count(), 0);
    for (std::size_t i = 0; i < clouds.size(); ++i) {
        const auto& label = clouds[i].label;
        if (!label || *label < 0 || std::size_t(*label) >= class_count())
            throw std::invalid_argument("dataset: cloud " + std::to_string(i) + " has a missing or out-of-range label");
        ++counts[std::size_t(*label)];
    }
    return counts;
}

// ------------------------------------------------------------------ OFF

ParseError::ParseError(const std::string& source, int line_no, const std::string& what)
    : std::runtime_error(source + ":" + std::to_string(line_no) + ": " + what), line(line_no) {}

TriangleMesh parse_off(std::istream& in, const std::string& source) {
    int line_no = 0;
    std::string line;

    // next non-blank, non-comment line with comments stripped
    auto next_line = [&](const char* expecting) -> std::string {
        while (std::getline(in, line)) {
            ++line_no;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.resize(hash);
            if (line.find_first_not_of(" \t\r") != std::string::npos) return line;
        }
        throw ParseError(source, line_no, std::string("unexpected end of file, expecting ") + expecting);
    };

    std::string header = next_line("header");
    const auto first = header.find_first_not_of(" \t");
    if (header.compare(first, 3, "OFF") == 0) {
        header = header.substr(first + 3);
        if (header.find_first_not_of(" \t\r") == std::string::npos) header = next_line("counts");
    }

    long long nv = -1, nf = -1;
    {
        std::istringstream counts(header);
        if (!(counts >> nv >> nf) || nv < 0 || nf < 0)
            throw ParseError(source, line_no, "malformed counts line (expected 'V F E')");
    }

    TriangleMesh mesh;
    mesh.vertices.reserve(std::size_t(nv));
    for (long long v = 0; v < nv; ++v) {
        std::istringstream row(next_line("vertex"));
        double x, y, z;
        if (!(row >> x >> y >> z)) throw ParseError(source, line_no, "malformed vertex line");
        if (!std::isfinite(x) || !std::isfinite(y) || !std::isfinite(z))
            throw ParseError(source, line_no, "non-finite vertex coordinate");
        mesh.vertices.push_back({float(x), float(y), float(z)});
    }
    for (long long f = 0; f < nf; ++f) {
        std::istringstream row(next_line("face"));
        long long count = 0;
        if (!(row >> count) || count < 3) throw ParseError(source, line_no, "malformed face line (need >= 3 vertices)");
        std::vector<std::uint32_t> idx;
        idx.reserve(std::size_t(count));
        for (long long k = 0; k < count; ++k) {
            long long i = -1;
            if (!(row >> i)) throw ParseError(source, line_no, "face line has fewer indices than declared");
            if (i < 0 || i >= nv)
                throw ParseError(source, line_no,
                                 "face index " + std::to_string(i) + " out of range (V=" + std::to_string(nv) + ")");
            idx.push_back(std::uint32_t(i));
        }
        for (std::size_t k = 1; k + 1 < idx.size(); ++k) mesh.faces.push_back({idx[0], idx[k], idx[k + 1]});
    }
    return mesh;
}

TriangleMesh read_off(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
    return parse_off(in, path.string());
}

// ----------------------------------------------------------- preprocess

PointCloud preprocess(const PointCloud& raw, std::size_t target_points, std::uint64_t seed) {
    const PointCloud normalized = normalize_unit_sphere(raw);
    const auto keep = farthest_point_sample(normalized, target_points, mix_seed(seed, {1}));
    // renormalize so the retained subset itself satisfies the unit-sphere contract
    return normalize_unit_sphere(subset(normalized, keep));
}

PointCloud preprocess(const TriangleMesh& mesh, const PreprocessOptions& options, std::uint64_t seed) {
    PointCloud cloud = sample_mesh_surface(mesh, options.surface_samples, mix_seed(seed, {0}));
    return preprocess(cloud, options.target_points, seed);
}

// --------------------------------------------------------------- packed

namespace {
constexpr char kPackedMagic[4] = {'P', 'G', 'C', '1'};
constexpr std::uint32_t kPackedVersion = 1;
constexpr std::uint16_t kNoLabel = 0xFFFF;
}  // namespace

std::vector<std::uint8_t> encode_packed(const Dataset& d) {
    const std::size_t n = d.clouds.empty() ? 0 : d.clouds.front().size();
    for (const auto& c : d.clouds) {
        if (c.size() != n) throw std::invalid_argument("write_packed: clouds must all have the same point count");
        if (c.label && (*c.label < 0 || *c.label >= int(kNoLabel)))
            throw std::invalid_argument("write_packed: label out of u16 range");
    }
    BinaryWriter w;
    w.text({kPackedMagic, 4});
    w.u32(kPackedVersion);
    w.u32(std::uint32_t(d.clouds.size()));
    w.u32(std::uint32_t(n));
    w.u32(std::uint32_t(d.class_names.size()));
    for (const auto& name : d.class_names) {
        if (name.size() > 0xFFFF) throw std::invalid_argument("write_packed: class name too long");
        w.u16(std::uint16_t(name.size()));
        w.text(name);
    }
    for (const auto& c : d.clouds) {
        w.u16(c.label ? std::uint16_t(*c.label) : kNoLabel);
        for (const auto& p : c.points) {
            w.f32(p.x);
            w.f32(p.y);
            w.f32(p.z);
        }
    }
    w.append_crc();
    return w.bytes();
}

Dataset decode_packed(std::vector<std::uint8_t> bytes) {
    BinaryReader r(std::move(bytes));
    if (r.remaining() < 4 || r.text(4) != std::string(kPackedMagic, 4))
        throw FormatError("packed dataset: bad magic (expected PGC1)");
    r.verify_crc("packed dataset");
    const std::uint32_t version = r.u32();
    if (version != kPackedVersion) throw FormatError("packed dataset: unsupported version " + std::to_string(version));
    const std::uint32_t N = r.u32(), n = r.u32(), C = r.u32();
    Dataset d;
    d.class_names.reserve(C);
    for (std::uint32_t c = 0; c < C; ++c) d.class_names.push_back(r.text(r.u16()));
    if (std::uint64_t(N) * (2 + 12ull * n) != r.remaining())
        throw FormatError("packed dataset: record section size does not match header counts");
    d.clouds.resize(N);
    std::vector<float> coords(std::size_t(n) * 3);
    for (auto& cloud : d.clouds) {
        const std::uint16_t label = r.u16();
        if (label != kNoLabel) cloud.label = int(label);
        r.f32s(coords);
        cloud.points.resize(n);
        for (std::uint32_t i = 0; i < n; ++i) cloud.points[i] = {coords[3 * i], coords[3 * i + 1], coords[3 * i + 2]};
    }
    return d;
}

void write_packed(const Dataset& dataset, const fs::path& path) { write_file_bytes(path, encode_packed(dataset)); }

Dataset read_packed(const fs::path& path) { return decode_packed(read_file_bytes(path)); }

// ------------------------------------------------------------ synthetic

const std::vector<std::string>& synth_class_names() {
    static const std::vector<std::string> names{"sphere", "cube", "cylinder", "torus"};
    return names;
}

namespace {

using Vec3 = std::array<double, 3>;

Vec3 sample_primitive(const std::string& shape, Rng& rng) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    constexpr double pi = std::numbers::pi;

    if (shape == "sphere") {
        Vec3 v{gauss(rng), gauss(rng), gauss(rng)};
        const double r = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
        if (r == 0.0) return {1.0, 0.0, 0.0};
        return {v[0] / r, v[1] / r, v[2] / r};
    }
    if (shape == "cube") {
        const int face = std::min(5, int(unit(rng) * 6.0));
        const double a = 2.0 * unit(rng) - 1.0, b = 2.0 * unit(rng) - 1.0;
        const double s = (face % 2 == 0) ? 1.0 : -1.0;
        switch (face / 2) {
            case 0: return {s, a, b};
            case 1: return {a, s, b};
            default: return {a, b, s};
        }
    }
    if (shape == "cylinder") {
        // radius 1, height 2: lateral area 4 pi, caps 2 pi
        const double phi = 2.0 * pi * unit(rng);
        if (unit(rng) < 2.0 / 3.0) return {std::cos(phi), std::sin(phi), 2.0 * unit(rng) - 1.0};
        const double r = std::sqrt(unit(rng));
        return {r * std::cos(phi), r * std::sin(phi), unit(rng) < 0.5 ? -1.0 : 1.0};
    }
    if (shape == "torus") {
        constexpr double R = 1.0, r = 0.35;
        for (;;) {
            const double u = 2.0 * pi * unit(rng), v = 2.0 * pi * unit(rng);
            // area element is proportional to R + r cos v
            if (unit(rng) * (R + r) <= R + r * std::cos(v))
                return {(R + r * std::cos(v)) * std::cos(u), (R + r * std::cos(v)) * std::sin(u), r * std::sin(v)};
        }
    }
    throw std::invalid_argument("synth: unknown class '" + shape + "'");
}

std::array<Vec3, 3> random_rotation(Rng& rng) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    double q[4];
    double norm = 0.0;
    do {
        norm = 0.0;
        for (double& x : q) {
            x = gauss(rng);
            norm += x * x;
        }
    } while (norm < 1e-12);
    norm = std::sqrt(norm);
    const double w = q[0] / norm, x = q[1] / norm, y = q[2] / norm, z = q[3] / norm;
    return {{{1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)},
             {2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)},
             {2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)}}};
}

}  // namespace

Dataset synth_generate(const SynthOptions& o) {
    if (o.per_class == 0) throw std::invalid_argument("synth: per_class must be at least 1");
    if (o.points < 2) throw std::invalid_argument("synth: need at least 2 points per cloud");
    if (o.classes.empty()) throw std::invalid_argument("synth: no classes requested");
    if (!(o.noise_sigma >= 0.0)) throw std::invalid_argument("synth: noise sigma must be non-negative");
    for (const auto& name : o.classes) {
        const auto& known = synth_class_names();
        if (std::find(known.begin(), known.end(), name) == known.end())
            throw std::invalid_argument("synth: unknown class '" + name + "'");
    }

    Dataset d;
    d.class_names = o.classes;
    d.clouds.reserve(o.classes.size() * o.per_class);
    for (std::size_t c = 0; c < o.classes.size(); ++c) {
        for (std::size_t i = 0; i < o.per_class; ++i) {
            Rng rng(mix_seed(o.seed, {c, i}));
            std::normal_distribution<double> noise(0.0, 1.0);
            const auto R = random_rotation(rng);
            PointCloud cloud;
            cloud.label = int(c);
            cloud.points.reserve(o.points);
            auto emit = [&](const Vec3& p) {
                Vec3 q{};
                for (int a = 0; a < 3; ++a) q[a] = R[a][0] * p[0] + R[a][1] * p[1] + R[a][2] * p[2];
                if (o.noise_sigma > 0.0)
                    for (double& x : q) x += o.noise_sigma * noise(rng);
                cloud.points.push_back({float(q[0]), float(q[1]), float(q[2])});
            };
            while (cloud.points.size() < o.points) {
                const Vec3 p = sample_primitive(o.classes[c], rng);
                emit(p);
                if (cloud.points.size() < o.points) emit({-p[0], -p[1], -p[2]});
            }
            d.clouds.push_back(normalize_unit_sphere(cloud));
        }
    }
    return d;
}

// -------------------------------------------------------------- batches

std::vector<std::vector<std::size_t>> batch_iter(std::size_t dataset_size, std::size_t batch_size,
                                                 std::uint64_t shuffle_seed, std::size_t epoch) {
    if (batch_size == 0) throw std::invalid_argument("batch_iter: batch size must be positive");
    std::vector<std::size_t> order(dataset_size);
    std::iota(order.begin(), order.end(), std::size_t(0));
    Rng rng(mix_seed(shuffle_seed, {epoch}));
    std::shuffle(order.begin(), order.end(), rng);

    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t start = 0; start < dataset_size; start += batch_size) {
        const std::size_t end = std::min(dataset_size, start + batch_size);
        batches.emplace_back(order.begin() + std::ptrdiff_t(start), order.begin() + std::ptrdiff_t(end));
    }
    return batches;
}

// ----------------------------------------------------------- OFF trees

OffConversion convert_off_tree(const fs::path& root, const PreprocessOptions& options, std::uint64_t seed) {
    if (!fs::is_directory(root)) throw std::runtime_error("'" + root.string() + "' is not a directory");

    std::vector<fs::path> class_dirs;
    for (const auto& entry : fs::directory_iterator(root))
        if (entry.is_directory()) class_dirs.push_back(entry.path());
    std::sort(class_dirs.begin(), class_dirs.end());
    if (class_dirs.empty()) throw std::runtime_error("'" + root.string() + "' contains no class directories");

    OffConversion out;
    for (const auto& dir : class_dirs) {
        out.train.class_names.push_back(dir.filename().string());
        out.test.class_names.push_back(dir.filename().string());
    }

    const char* splits[2] = {"train", "test"};
    for (std::size_t s = 0; s < 2; ++s) {
        Dataset& target = s == 0 ? out.train : out.test;
        std::size_t object_index = 0;
        for (std::size_t c = 0; c < class_dirs.size(); ++c) {
            const fs::path split_dir = class_dirs[c] / splits[s];
            if (!fs::is_directory(split_dir)) continue;
            std::vector<fs::path> files;
            for (const auto& entry : fs::directory_iterator(split_dir))
                if (entry.is_regular_file() && entry.path().extension() == ".off") files.push_back(entry.path());
            std::sort(files.begin(), files.end());
            for (const auto& file : files) {
                const std::uint64_t object_seed = mix_seed(seed, {s, object_index++});
                try {
                    PointCloud cloud = preprocess(read_off(file), options, object_seed);
                    cloud.label = int(c);
                    target.clouds.push_back(std::move(cloud));
                } catch (const std::exception& e) {
                    out.failures.push_back(file.string() + ": " + e.what());
                }
            }
        }
    }
    return out;
}

}  // namespace pointgcn
