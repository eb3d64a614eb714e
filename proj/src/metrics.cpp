#include "man/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <tuple>

namespace man {

double auc(const std::vector<ScoredExample>& examples) {
    // rank-sum formulation with average ranks for ties; algebraically equal
    // to counting pairs with wins + half ties
    std::vector<std::pair<double, int>> scored;
    std::size_t positives = 0, negatives = 0;
    for (const auto& ex : examples) {
        scored.emplace_back(ex.score, ex.label);
        if (ex.label == 1)
            ++positives;
        else
            ++negatives;
    }
    if (positives == 0 || negatives == 0)
        throw std::runtime_error("auc: needs at least one positive and one negative");
    std::sort(scored.begin(), scored.end(),
              [](const auto& x, const auto& y) { return x.first < y.first; });
    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < scored.size()) {
        std::size_t j = i;
        while (j < scored.size() && scored[j].first == scored[i].first) ++j;
        const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // ranks are 1-based
        for (std::size_t t = i; t < j; ++t)
            if (scored[t].second == 1) rank_sum_pos += avg_rank;
        i = j;
    }
    const double p = static_cast<double>(positives), n = static_cast<double>(negatives);
    return (rank_sum_pos - p * (p + 1.0) / 2.0) / (p * n);
}

double gauc(const std::vector<ScoredExample>& examples) {
    std::map<std::string, std::vector<ScoredExample>> by_user;
    for (const auto& ex : examples) by_user[ex.user_id].push_back(ex);
    double weighted = 0.0, weight_sum = 0.0;
    for (const auto& [user, rows] : by_user) {
        std::size_t positives = 0, negatives = 0;
        for (const auto& r : rows) (r.label == 1 ? positives : negatives)++;
        if (positives == 0 || negatives == 0) continue;
        weighted += static_cast<double>(positives) * auc(rows);
        weight_sum += static_cast<double>(positives);
    }
    if (weight_sum == 0.0) throw std::runtime_error("gauc: no user has both classes");
    return weighted / weight_sum;
}

namespace {

// pessimistic rank of the positive in each candidate set: 1 + count of
// negatives scoring >= the positive
std::vector<std::size_t> positive_ranks(const std::vector<ScoredExample>& examples) {
    std::map<std::size_t, std::vector<const ScoredExample*>> sets;
    for (const auto& ex : examples) sets[ex.candidate_set].push_back(&ex);
    std::vector<std::size_t> ranks;
    for (const auto& [id, rows] : sets) {
        const ScoredExample* positive = nullptr;
        for (const auto* r : rows) {
            if (r->label == 1) {
                if (positive)
                    throw std::runtime_error("candidate set " + std::to_string(id) +
                                             " has more than one positive");
                positive = r;
            }
        }
        if (!positive)
            throw std::runtime_error("candidate set " + std::to_string(id) + " has no positive");
        std::size_t rank = 1;
        for (const auto* r : rows)
            if (r->label == 0 && r->score >= positive->score) ++rank;
        ranks.push_back(rank);
    }
    if (ranks.empty()) throw std::runtime_error("no candidate sets");
    return ranks;
}

}  // namespace

double mrr(const std::vector<ScoredExample>& examples) {
    const auto ranks = positive_ranks(examples);
    double acc = 0.0;
    for (std::size_t r : ranks) acc += 1.0 / static_cast<double>(r);
    return acc / static_cast<double>(ranks.size());
}

double ndcg_at_k(const std::vector<ScoredExample>& examples, std::size_t k) {
    if (k < 1) throw std::runtime_error("ndcg_at_k: k must be >= 1");
    const auto ranks = positive_ranks(examples);
    double acc = 0.0;
    for (std::size_t r : ranks)
        if (r <= k) acc += 1.0 / std::log2(static_cast<double>(r) + 1.0);
    return acc / static_cast<double>(ranks.size());
}

void write_metrics_csv(const std::string& path,
                       const std::vector<std::tuple<std::string, std::string, double>>& rows) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write metrics file: " + path);
    out << "domain,metric,value\n";
    out.precision(15);
    for (const auto& [domain, metric, value] : rows)
        out << domain << ',' << metric << ',' << value << '\n';
}

}  // namespace man
