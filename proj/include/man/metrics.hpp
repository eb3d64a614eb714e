#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace man {

struct ScoredExample {
    std::string user_id;
    double score = 0.0;
    int label = 0;
    std::size_t candidate_set = 0;  // one positive plus its negatives
};

// P(score+ > score-) + 0.5 P(tie) over all positive/negative pairs.
// Throws when either class is missing.
double auc(const std::vector<ScoredExample>& examples);

// Per-user AUC weighted by the user's positive count; users lacking one
// class are skipped. Throws when no user qualifies. (Reported as WAUC in
// some summaries; same quantity.)
double gauc(const std::vector<ScoredExample>& examples);

// Mean reciprocal rank of the positive within its candidate set,
// descending-score ranks, ties resolved against the positive.
double mrr(const std::vector<ScoredExample>& examples);

// Binary-relevance NDCG: 1 / log2(1 + rank) when rank <= k, else 0.
double ndcg_at_k(const std::vector<ScoredExample>& examples, std::size_t k = 10);

struct MetricsReport {
    // metric name -> value, per domain tag ("a" / "b")
    std::map<std::string, double> values;
};

void write_metrics_csv(const std::string& path,
                       const std::vector<std::tuple<std::string, std::string, double>>& rows);

}  // namespace man
