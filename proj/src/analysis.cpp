#include "man/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace man {

std::vector<GroupReprRow> export_group_representations(
    const ManModel& model, const DatasetSplit& data,
    const std::map<std::string, std::size_t>* ground_truth, std::size_t* skipped) {
    if (!model.cfg.use_gpa || model.cfg.mode != ModelMode::Cross)
        throw std::runtime_error(
            "export_group_representations: model was built without group prototypes");
    std::vector<GroupReprRow> rows;
    std::size_t skip_count = 0;
    for (Domain d : {Domain::A, Domain::B}) {
        // most recent positive training sequence per user
        std::map<std::string, const SequenceExample*> latest;
        std::set<std::string> all_users;
        for (const auto* bucket :
             {&data.domain(d).train, &data.domain(d).validation, &data.domain(d).test})
            for (const auto& ex : *bucket) all_users.insert(ex.user_id);
        for (const auto& ex : data.domain(d).train) {
            if (ex.label != 1) continue;
            auto [it, inserted] = latest.try_emplace(ex.user_id, &ex);
            if (!inserted && ex.target_ts > it->second->target_ts) it->second = &ex;
        }
        skip_count += all_users.size() - latest.size();
        for (const auto& [user, ex] : latest) {
            NoGradGuard guard;
            auto fwd = model.forward(*ex);
            if (!fwd.pooled_groups) throw std::runtime_error("missing pooled group output");
            GroupReprRow row;
            row.user_id = user;
            row.domain = d;
            row.vector = fwd.pooled_groups->data;
            if (ground_truth) {
                auto it = ground_truth->find(user);
                if (it != ground_truth->end()) row.true_group = it->second;
            }
            rows.push_back(std::move(row));
        }
    }
    if (skipped) *skipped = skip_count;
    return rows;
}

void write_group_representations_csv(const std::string& path,
                                     const std::vector<GroupReprRow>& rows) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write representations file: " + path);
    const std::size_t width = rows.empty() ? 0 : rows[0].vector.size();
    out << "user_id,domain,true_group";
    for (std::size_t i = 0; i < width; ++i) out << ",v_" << i;
    out << '\n';
    out.precision(15);
    for (const auto& row : rows) {
        out << row.user_id << ',' << domain_name(row.domain) << ',';
        if (row.true_group) out << *row.true_group;
        for (double v : row.vector) out << ',' << v;
        out << '\n';
    }
}

namespace {

double squared_distance(const std::vector<double>& x, const std::vector<double>& y) {
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = x[i] - y[i];
        acc += d * d;
    }
    return acc;
}

}  // namespace

KMeansResult kmeans(const std::vector<std::vector<double>>& points, std::size_t k,
                    std::uint64_t seed, std::size_t max_iter) {
    if (k == 0) throw std::runtime_error("kmeans: k must be positive");
    if (k > points.size())
        throw std::runtime_error("kmeans: k=" + std::to_string(k) + " exceeds " +
                                 std::to_string(points.size()) + " points");
    const std::size_t n = points.size();
    const std::size_t dim = points[0].size();
    Rng rng(seed, "kmeans");

    // k-means++ seeding
    KMeansResult result;
    result.centroids.push_back(points[rng.uniform_int(n)]);
    std::vector<double> dist2(n, std::numeric_limits<double>::max());
    while (result.centroids.size() < k) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            dist2[i] = std::min(dist2[i], squared_distance(points[i], result.centroids.back()));
            total += dist2[i];
        }
        std::size_t chosen = 0;
        if (total > 0.0) {
            const double target = rng.uniform() * total;
            double acc = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                acc += dist2[i];
                if (acc >= target) {
                    chosen = i;
                    break;
                }
            }
        } else {
            chosen = rng.uniform_int(n);  // all points coincide with a centroid
        }
        result.centroids.push_back(points[chosen]);
    }

    result.assignments.assign(n, 0);
    for (std::size_t iter = 0; iter < max_iter; ++iter) {
        bool changed = iter == 0;
        double inertia = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t best = 0;
            double best_d = std::numeric_limits<double>::max();
            for (std::size_t c = 0; c < k; ++c) {
                const double d = squared_distance(points[i], result.centroids[c]);
                if (d < best_d) {
                    best_d = d;
                    best = c;
                }
            }
            if (result.assignments[i] != best) changed = true;
            result.assignments[i] = best;
            inertia += best_d;
        }
        result.inertia_history.push_back(inertia);
        result.iterations = iter + 1;
        if (!changed && iter > 0) break;

        std::vector<std::vector<double>> sums(k, std::vector<double>(dim, 0.0));
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            counts[result.assignments[i]]++;
            for (std::size_t j = 0; j < dim; ++j) sums[result.assignments[i]][j] += points[i][j];
        }
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] == 0) continue;  // empty cluster keeps its centroid
            for (std::size_t j = 0; j < dim; ++j)
                result.centroids[c][j] = sums[c][j] / static_cast<double>(counts[c]);
        }
    }
    return result;
}

namespace {

// dominant eigenpair of a symmetric matrix by power iteration
std::pair<double, std::vector<double>> dominant_eigenpair(
    const std::vector<std::vector<double>>& m) {
    const std::size_t d = m.size();
    Rng rng(1234567, "pca_power");  // fixed stream: row-order invariant output
    std::vector<double> v(d);
    for (auto& x : v) x = rng.uniform(-1.0, 1.0);
    double lambda = 0.0;
    for (std::size_t iter = 0; iter < 1000; ++iter) {
        std::vector<double> w(d, 0.0);
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j) w[i] += m[i][j] * v[j];
        double norm = std::sqrt(std::inner_product(w.begin(), w.end(), w.begin(), 0.0));
        if (norm == 0.0) return {0.0, std::vector<double>(d, 0.0)};
        for (auto& x : w) x /= norm;
        double new_lambda = 0.0;
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j) new_lambda += w[i] * m[i][j] * w[j];
        const bool converged = std::fabs(new_lambda - lambda) <= 1e-14 * std::fabs(new_lambda);
        v = std::move(w);
        lambda = new_lambda;
        if (converged && iter > 2) break;
    }
    return {lambda, v};
}

void fix_sign(std::vector<double>& v) {
    for (double x : v) {
        if (std::fabs(x) > 1e-12) {
            if (x < 0.0)
                for (auto& y : v) y = -y;
            return;
        }
    }
}

}  // namespace

Pca2dResult pca_2d(const std::vector<std::vector<double>>& points) {
    if (points.size() < 2) throw std::runtime_error("pca_2d: needs at least 2 rows");
    const std::size_t n = points.size();
    const std::size_t d = points[0].size();
    std::vector<double> mean(d, 0.0);
    for (const auto& p : points)
        for (std::size_t j = 0; j < d; ++j) mean[j] += p[j];
    for (auto& m : mean) m /= static_cast<double>(n);

    std::vector<std::vector<double>> cov(d, std::vector<double>(d, 0.0));
    for (const auto& p : points)
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j)
                cov[i][j] += (p[i] - mean[i]) * (p[j] - mean[j]);
    for (auto& row : cov)
        for (auto& x : row) x /= static_cast<double>(n - 1);

    auto [lambda1, v1] = dominant_eigenpair(cov);
    if (lambda1 <= 0.0) throw std::runtime_error("pca_2d: rank-0 data");
    auto deflated = cov;
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) deflated[i][j] -= lambda1 * v1[i] * v1[j];
    auto [lambda2, v2] = dominant_eigenpair(deflated);
    if (lambda2 < 0.0) lambda2 = 0.0;
    fix_sign(v1);
    fix_sign(v2);

    Pca2dResult res;
    res.explained_variance = {lambda1, lambda2};
    res.components.resize(d);
    for (std::size_t j = 0; j < d; ++j) res.components[j] = {v1[j], v2[j]};
    res.coordinates.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        double x = 0.0, y = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double c = points[i][j] - mean[j];
            x += c * v1[j];
            y += c * v2[j];
        }
        res.coordinates[i] = {x, y};
    }
    return res;
}

double group_alignment_score(const std::vector<std::size_t>& assignments,
                             const std::vector<std::size_t>& ground_truth) {
    if (assignments.size() != ground_truth.size())
        throw std::runtime_error("group_alignment_score: size mismatch");
    if (assignments.empty()) throw std::runtime_error("group_alignment_score: empty input");

    auto compact = [](const std::vector<std::size_t>& labels, std::vector<std::size_t>& out) {
        std::map<std::size_t, std::size_t> remap;
        out.reserve(labels.size());
        for (std::size_t l : labels) {
            auto [it, _] = remap.try_emplace(l, remap.size());
            out.push_back(it->second);
        }
        return remap.size();
    };
    std::vector<std::size_t> left, right;
    const std::size_t kl = compact(assignments, left);
    const std::size_t kr = compact(ground_truth, right);
    const std::size_t k = std::max(kl, kr);
    if (k > 10) throw std::runtime_error("group_alignment_score: more than 10 labels");

    std::vector<std::vector<std::size_t>> confusion(k, std::vector<std::size_t>(k, 0));
    for (std::size_t i = 0; i < left.size(); ++i) confusion[left[i]][right[i]]++;

    std::vector<std::size_t> perm(k);
    for (std::size_t i = 0; i < k; ++i) perm[i] = i;
    std::size_t best = 0;
    do {
        std::size_t hits = 0;
        for (std::size_t c = 0; c < k; ++c) hits += confusion[c][perm[c]];
        best = std::max(best, hits);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return static_cast<double>(best) / static_cast<double>(left.size());
}

void write_projection_csv(const std::string& path, const std::vector<GroupReprRow>& rows,
                          const KMeansResult& clusters, const Pca2dResult& projection) {
    if (rows.size() != clusters.assignments.size() ||
        rows.size() != projection.coordinates.size())
        throw std::runtime_error("write_projection_csv: row count mismatch");
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write projection file: " + path);
    out << "user_id,domain,cluster,x,y\n";
    out.precision(15);
    for (std::size_t i = 0; i < rows.size(); ++i)
        out << rows[i].user_id << ',' << domain_name(rows[i].domain) << ','
            << clusters.assignments[i] << ',' << projection.coordinates[i][0] << ','
            << projection.coordinates[i][1] << '\n';
}

}  // namespace man
