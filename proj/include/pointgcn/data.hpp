#ifndef POINTGCN_DATA_HPP
#define POINTGCN_DATA_HPP

#include "pointgcn/binary_io.hpp"
#include "pointgcn/pointcloud.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace pointgcn {

struct Dataset {
    std::vector<PointCloud> clouds;
    std::vector<std::string> class_names;

    std::size_t size() const { return clouds.size(); }
    std::size_t class_count() const { return class_names.size(); }
    /// Instances per class; throws if a label is missing or out of range.
    std::vector<std::size_t> class_counts() const;

    friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// OFF syntax error; the message carries the line number.
struct ParseError : std::runtime_error {
    ParseError(const std::string& source, int line, const std::string& what);
    int line = 0;
};

/// Reads an OFF mesh. Polygons with more than three vertices are fan
/// triangulated; an "OFF" header fused with the counts line is accepted.
TriangleMesh read_off(const std::filesystem::path& path);
TriangleMesh parse_off(std::istream& in, const std::string& source = "<stream>");

struct PreprocessOptions {
    std::size_t target_points = 1024;
    std::size_t surface_samples = 2048;
};

/// Surface sampling, unit-sphere normalization, then farthest point sampling.
PointCloud preprocess(const TriangleMesh& mesh, const PreprocessOptions& options, std::uint64_t seed);
PointCloud preprocess(const PointCloud& raw, std::size_t target_points, std::uint64_t seed);

/// Packed "PGC1" point-cloud container. All clouds must have the same size.
std::vector<std::uint8_t> encode_packed(const Dataset& dataset);
Dataset decode_packed(std::vector<std::uint8_t> bytes);
void write_packed(const Dataset& dataset, const std::filesystem::path& path);
Dataset read_packed(const std::filesystem::path& path);

struct SynthOptions {
    std::vector<std::string> classes{"sphere", "cube", "cylinder", "torus"};
    std::size_t per_class = 100;
    std::size_t points = 1024;
    double noise_sigma = 0.0;
    std::uint64_t seed = 0;
};

/// Randomly rotated, noisy, normalized surface samples of geometric
/// primitives. Points are drawn in antipodal pairs, so for an even point
/// count and zero noise the centroid is exactly the shape centre.
Dataset synth_generate(const SynthOptions& options);

/// Names accepted by SynthOptions::classes.
const std::vector<std::string>& synth_class_names();

/// Batches of dataset indices for one epoch. The shuffle depends only on
/// (shuffle_seed, epoch); the last batch may be short.
std::vector<std::vector<std::size_t>> batch_iter(std::size_t dataset_size, std::size_t batch_size,
                                                 std::uint64_t shuffle_seed, std::size_t epoch);

struct OffConversion {
    Dataset train;
    Dataset test;
    std::vector<std::string> failures;  // "path: message"
};

/// Converts a `<class>/<split>/<file>.off` tree; `split` is "train" or
/// "test". Files that fail to parse are reported and skipped.
OffConversion convert_off_tree(const std::filesystem::path& root, const PreprocessOptions& options,
                               std::uint64_t seed);

}  // namespace pointgcn

#endif  // POINTGCN_DATA_HPP
