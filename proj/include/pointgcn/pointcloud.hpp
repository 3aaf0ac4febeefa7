#ifndef POINTGCN_POINTCLOUD_HPP
#define POINTGCN_POINTCLOUD_HPP

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

namespace pointgcn {

struct Point3 {
    float x = 0.0f;
    float y = 0.0f;
    float z = 0.0f;

    friend bool operator==(const Point3&, const Point3&) = default;
};

/// Squared Euclidean distance, accumulated in double.
double squared_distance(const Point3& a, const Point3& b);

struct PointCloud {
    std::vector<Point3> points;
    std::optional<int> label;

    std::size_t size() const { return points.size(); }
    friend bool operator==(const PointCloud&, const PointCloud&) = default;
};

struct TriangleMesh {
    std::vector<Point3> vertices;
    std::vector<std::array<std::uint32_t, 3>> faces;
};

double triangle_area(const Point3& a, const Point3& b, const Point3& c);

/// Translates the centroid to the origin and scales so the farthest point
/// lies on the unit sphere. Throws std::invalid_argument if the cloud is
/// empty or all points coincide.
PointCloud normalize_unit_sphere(const PointCloud& cloud);

/// Greedy max-min farthest point sampling. The first index is drawn
/// uniformly from `seed`; ties on distance resolve to the lowest index.
std::vector<std::size_t> farthest_point_sample(const PointCloud& cloud, std::size_t m,
                                               std::uint64_t seed);

/// Same as above with the first index fixed by the caller.
std::vector<std::size_t> farthest_point_sample_from(const PointCloud& cloud, std::size_t m,
                                                    std::size_t first);

/// Area-weighted face choice followed by a uniform barycentric point.
PointCloud sample_mesh_surface(const TriangleMesh& mesh, std::size_t n, std::uint64_t seed);

PointCloud subset(const PointCloud& cloud, const std::vector<std::size_t>& indices);

}  // namespace pointgcn

#endif  // POINTGCN_POINTCLOUD_HPP
