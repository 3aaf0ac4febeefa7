#include "pointgcn/pointcloud.hpp"

#include "pointgcn/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace pointgcn {

double squared_distance(const Point3& a, const Point3& b) {
    const double dx = double(a.x) - double(b.x);
    const double dy = double(a.y) - double(b.y);
    const double dz = double(a.z) - double(b.z);
    return dx * dx + dy * dy + dz * dz;
}

double triangle_area(const Point3& a, const Point3& b, const Point3& c) {
    const double ux = double(b.x) - a.x, uy = double(b.y) - a.y, uz = double(b.z) - a.z;
    const double vx = double(c.x) - a.x, vy = double(c.y) - a.y, vz = double(c.z) - a.z;
    const double cx = uy * vz - uz * vy;
    const double cy = uz * vx - ux * vz;
    const double cz = ux * vy - uy * vx;
    return 0.5 * std::sqrt(cx * cx + cy * cy + cz * cz);
}

PointCloud normalize_unit_sphere(const PointCloud& cloud) {
    const std::size_t n = cloud.size();
    if (n == 0) throw std::invalid_argument("normalize_unit_sphere: empty point cloud");

    double cx = 0.0, cy = 0.0, cz = 0.0;
    for (const auto& p : cloud.points) {
        cx += p.x;
        cy += p.y;
        cz += p.z;
    }
    cx /= double(n);
    cy /= double(n);
    cz /= double(n);

    double max_norm = 0.0;
    for (const auto& p : cloud.points) {
        const double dx = p.x - cx, dy = p.y - cy, dz = p.z - cz;
        max_norm = std::max(max_norm, std::sqrt(dx * dx + dy * dy + dz * dz));
    }
    if (!(max_norm > 0.0) || !std::isfinite(max_norm))
        throw std::invalid_argument("normalize_unit_sphere: degenerate cloud (all points coincide)");

    PointCloud out;
    out.label = cloud.label;
    out.points.reserve(n);
    for (const auto& p : cloud.points) {
        out.points.push_back({float((p.x - cx) / max_norm), float((p.y - cy) / max_norm),
                              float((p.z - cz) / max_norm)});
    }
    return out;
}

std::vector<std::size_t> farthest_point_sample_from(const PointCloud& cloud, std::size_t m,
                                                    std::size_t first) {
    const std::size_t n = cloud.size();
    if (m == 0 || m > n)
        throw std::invalid_argument("farthest_point_sample: need 1 <= m <= n (m=" + std::to_string(m) +
                                    ", n=" + std::to_string(n) + ")");
    if (first >= n) throw std::invalid_argument("farthest_point_sample: first index out of range");

    std::vector<std::size_t> selected;
    selected.reserve(m);
    std::vector<double> min_dist(n, std::numeric_limits<double>::infinity());
    std::vector<char> taken(n, 0);

    std::size_t current = first;
    for (std::size_t s = 0; s < m; ++s) {
        selected.push_back(current);
        taken[current] = 1;
        if (s + 1 == m) break;

        const Point3& c = cloud.points[current];
        std::size_t best = n;
        double best_dist = -1.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (taken[i]) continue;
            min_dist[i] = std::min(min_dist[i], squared_distance(cloud.points[i], c));
            // strict comparison keeps the lowest index on ties
            if (min_dist[i] > best_dist) {
                best_dist = min_dist[i];
                best = i;
            }
        }
        current = best;
    }
    return selected;
}

std::vector<std::size_t> farthest_point_sample(const PointCloud& cloud, std::size_t m,
                                               std::uint64_t seed) {
    if (cloud.size() == 0) throw std::invalid_argument("farthest_point_sample: empty point cloud");
    Rng rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, cloud.size() - 1);
    return farthest_point_sample_from(cloud, m, pick(rng));
}

PointCloud sample_mesh_surface(const TriangleMesh& mesh, std::size_t n, std::uint64_t seed) {
    const std::size_t nv = mesh.vertices.size();
    std::vector<double> cumulative;
    cumulative.reserve(mesh.faces.size());
    double total = 0.0;
    for (const auto& f : mesh.faces) {
        if (f[0] >= nv || f[1] >= nv || f[2] >= nv)
            throw std::invalid_argument("sample_mesh_surface: face index out of range");
        total += triangle_area(mesh.vertices[f[0]], mesh.vertices[f[1]], mesh.vertices[f[2]]);
        cumulative.push_back(total);
    }
    if (!(total > 0.0)) throw std::invalid_argument("sample_mesh_surface: mesh has zero surface area");

    Rng rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    PointCloud out;
    out.points.reserve(n);
    for (std::size_t s = 0; s < n; ++s) {
        const double r = unit(rng) * total;
        // upper_bound never lands on a zero-area face
        auto it = std::upper_bound(cumulative.begin(), cumulative.end(), r);
        if (it == cumulative.end()) --it;
        const auto& f = mesh.faces[std::size_t(it - cumulative.begin())];
        const Point3& a = mesh.vertices[f[0]];
        const Point3& b = mesh.vertices[f[1]];
        const Point3& c = mesh.vertices[f[2]];

        double u = unit(rng), v = unit(rng);
        if (u + v > 1.0) {
            u = 1.0 - u;
            v = 1.0 - v;
        }
        const double w = 1.0 - u - v;
        out.points.push_back({float(w * a.x + u * b.x + v * c.x), float(w * a.y + u * b.y + v * c.y),
                              float(w * a.z + u * b.z + v * c.z)});
    }
    return out;
}

PointCloud subset(const PointCloud& cloud, const std::vector<std::size_t>& indices) {
    PointCloud out;
    out.label = cloud.label;
    out.points.reserve(indices.size());
    for (std::size_t i : indices) out.points.push_back(cloud.points.at(i));
    return out;
}

}  // namespace pointgcn
