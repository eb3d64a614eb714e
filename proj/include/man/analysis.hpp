#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "man/data.hpp"
#include "man/model.hpp"

namespace man {

struct GroupReprRow {
    std::string user_id;
    Domain domain = Domain::A;
    std::vector<double> vector;             // pooled group representation, length D
    std::optional<std::size_t> true_group;  // synthetic ground truth when known
};

// One row per (user, domain) from the user's most recent training sequence.
// Users without a training sequence are skipped (counted in `skipped`).
std::vector<GroupReprRow> export_group_representations(
    const ManModel& model, const DatasetSplit& data,
    const std::map<std::string, std::size_t>* ground_truth = nullptr,
    std::size_t* skipped = nullptr);

void write_group_representations_csv(const std::string& path,
                                     const std::vector<GroupReprRow>& rows);

struct KMeansResult {
    std::vector<std::size_t> assignments;
    std::vector<std::vector<double>> centroids;
    std::vector<double> inertia_history;  // non-increasing per Lloyd iteration
    std::size_t iterations = 0;
};

// Lloyd's algorithm with k-means++ seeding; deterministic under seed.
KMeansResult kmeans(const std::vector<std::vector<double>>& points, std::size_t k,
                    std::uint64_t seed, std::size_t max_iter = 100);

struct Pca2dResult {
    std::vector<std::array<double, 2>> coordinates;
    std::array<double, 2> explained_variance{};   // top-2 covariance eigenvalues
    std::vector<std::array<double, 2>> components;  // per input dimension
};

// Centered projection onto the top two covariance eigenvectors (iterated
// power method with deflation). Sign convention: each component's first
// nonzero loading is positive.
Pca2dResult pca_2d(const std::vector<std::vector<double>>& points);

// Best label-matching accuracy over permutations of cluster ids (exhaustive;
// supports up to 10 distinct labels per side).
double group_alignment_score(const std::vector<std::size_t>& assignments,
                             const std::vector<std::size_t>& ground_truth);

void write_projection_csv(const std::string& path, const std::vector<GroupReprRow>& rows,
                          const KMeansResult& clusters, const Pca2dResult& projection);

}  // namespace man
