#pragma once

#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "bnas/cost_model.hpp"
#include "bnas/evaluator.hpp"

namespace bnas {

enum class CostMetric { params, madds };

inline const char* cost_metric_name(CostMetric m) { return m == CostMetric::params ? "params" : "madds"; }

inline CostMetric parse_cost_metric(const std::string& s) {
    if (s == "params") return CostMetric::params;
    if (s == "madds") return CostMetric::madds;
    throw ConfigError("unknown cost metric '" + s + "', expected params or madds");
}

struct Constraint {
    CostMetric metric = CostMetric::params;
    int64_t bound = 0;
    bool active = false;  // inactive means unconstrained
};

inline int64_t metric_of(const Cost& c, CostMetric m) { return m == CostMetric::params ? c.params : c.madds; }

struct SearchResult {
    ArchEncoding arch;
    double loss = 0.0;     // sum of per-block weighted losses
    Cost cost;             // stem + head + chosen blocks
    int64_t visited = 0;   // ranking entries expanded by the traversal
    std::string proof = "exact";
};

namespace detail {

// (loss, active-metric cost, lexicographic encoding); total order over results
inline bool result_less(const SearchResult& a, const SearchResult& b, CostMetric m) {
    if (a.loss != b.loss) return a.loss < b.loss;
    const int64_t ca = metric_of(a.cost, m), cb = metric_of(b.cost, m);
    if (ca != cb) return ca < cb;
    for (size_t i = 0; i < a.arch.size() && i < b.arch.size(); ++i) {
        if (a.arch[i].cell != b.arch[i].cell) return a.arch[i].cell < b.arch[i].cell;
        if (a.arch[i].ops != b.arch[i].ops) return a.arch[i].ops < b.arch[i].ops;
    }
    return false;
}

struct TraversalState {
    const std::vector<PathRanking>* rankings = nullptr;
    std::vector<double> lambda;
    CostMetric metric = CostMetric::params;
    int64_t budget = 0;  // bound minus stem and head, or max when unconstrained
    std::vector<int64_t> suffix_min_cost;   // over blocks i..end, cheapest entries
    std::vector<double> suffix_min_loss;    // over blocks i..end, weighted
    std::optional<SearchResult> best;
    ArchEncoding partial;
    int64_t visited = 0;

    void descend(size_t block, double loss, const Cost& cost) {
        const std::vector<EvalRecord>& recs = (*rankings)[block].records;
        for (const EvalRecord& rec : recs) {
            const double wl = loss + lambda[block] * rec.loss;
            // entries are loss-sorted, so once even the cheapest completion
            // cannot beat the incumbent nothing later can either
            if (best && wl + suffix_min_loss[block + 1] > best->loss) break;
            visited += 1;
            const Cost next_cost{cost.params + rec.params, cost.madds + rec.madds};
            if (metric_of(next_cost, metric) + suffix_min_cost[block + 1] > budget) continue;
            partial.push_back({rec.cell, rec.path});
            if (block + 1 == rankings->size()) {
                SearchResult cand;
                cand.arch = partial;
                cand.loss = wl;
                cand.cost = next_cost;
                if (!best || result_less(cand, *best, metric)) best = std::move(cand);
            } else {
                descend(block + 1, wl, next_cost);
            }
            partial.pop_back();
        }
    }
};

}  // namespace detail

// Exact best-architecture search over per-block rankings: depth-first in
// loss order with two sound prunes, a cost bound from the cheapest possible
// completion and a loss bound from the best possible completion. Ties on
// loss are still expanded, so the result matches exhaustive enumeration.
inline SearchResult traversal_search(const SupernetConfig& cfg, const std::vector<PathRanking>& rankings,
                                     const CostTable& table, const Constraint& constraint) {
    if (rankings.size() != cfg.blocks.size())
        throw ConfigError("traversal_search: got " + std::to_string(rankings.size()) + " rankings for " +
                          std::to_string(cfg.blocks.size()) + " blocks");
    for (size_t b = 0; b < rankings.size(); ++b)
        if (rankings[b].records.empty()) throw ConfigError("traversal_search: block " + std::to_string(b + 1) + " ranking is empty");

    detail::TraversalState st;
    st.rankings = &rankings;
    st.metric = constraint.metric;
    for (size_t b = 0; b < rankings.size(); ++b) st.lambda.push_back(block_lambda(cfg, b));

    const Cost fixed = table.stem + table.head;
    if (constraint.active) {
        st.budget = constraint.bound - metric_of(fixed, constraint.metric);
        if (st.budget < 0)
            throw NoFeasibleModelError("stem and head alone exceed the " +
                                       std::string(cost_metric_name(constraint.metric)) + " bound " +
                                       std::to_string(constraint.bound));
    } else {
        st.budget = std::numeric_limits<int64_t>::max();
    }

    const size_t n = rankings.size();
    st.suffix_min_cost.assign(n + 1, 0);
    st.suffix_min_loss.assign(n + 1, 0.0);
    for (size_t b = n; b-- > 0;) {
        int64_t mc = std::numeric_limits<int64_t>::max();
        double ml = std::numeric_limits<double>::infinity();
        for (const EvalRecord& rec : rankings[b].records) {
            mc = std::min(mc, metric_of(Cost{rec.params, rec.madds}, constraint.metric));
            ml = std::min(ml, st.lambda[b] * rec.loss);
        }
        st.suffix_min_cost[b] = st.suffix_min_cost[b + 1] + mc;
        st.suffix_min_loss[b] = st.suffix_min_loss[b + 1] + ml;
    }

    st.descend(0, 0.0, Cost{});
    if (!st.best) {
        if (!constraint.active) throw NoFeasibleModelError("traversal found no model in an unconstrained search");
        throw NoFeasibleModelError("no architecture satisfies " + std::string(cost_metric_name(constraint.metric)) +
                                   " <= " + std::to_string(constraint.bound));
    }
    SearchResult out = *st.best;
    out.cost += fixed;
    out.visited = st.visited;
    return out;
}

// Reference oracle: enumerates every combination. Refuses above the cap.
inline SearchResult brute_force_search(const SupernetConfig& cfg, const std::vector<PathRanking>& rankings,
                                       const CostTable& table, const Constraint& constraint,
                                       int64_t cap = 10'000'000) {
    if (rankings.size() != cfg.blocks.size())
        throw ConfigError("brute_force_search: got " + std::to_string(rankings.size()) + " rankings for " +
                          std::to_string(cfg.blocks.size()) + " blocks");
    int64_t total = 1;
    for (const PathRanking& r : rankings) {
        if (r.records.empty()) throw ConfigError("brute_force_search: empty ranking");
        if (total > cap / int64_t(r.records.size())) throw OverflowError("brute force above the enumeration cap");
        total *= int64_t(r.records.size());
    }

    const Cost fixed = table.stem + table.head;
    std::vector<size_t> idx(rankings.size(), 0);
    std::optional<SearchResult> best;
    int64_t visited = 0;
    for (;;) {
        SearchResult cand;
        cand.loss = 0.0;
        Cost cost;
        for (size_t b = 0; b < rankings.size(); ++b) {
            const EvalRecord& rec = rankings[b].records[idx[b]];
            cand.arch.push_back({rec.cell, rec.path});
            cand.loss += block_lambda(cfg, b) * rec.loss;
            cost += Cost{rec.params, rec.madds};
        }
        cand.cost = cost + fixed;
        visited += 1;
        if (!constraint.active || metric_of(cand.cost, constraint.metric) <= constraint.bound)
            if (!best || detail::result_less(cand, *best, constraint.metric)) best = std::move(cand);

        size_t b = rankings.size();
        while (b-- > 0) {
            if (++idx[b] < rankings[b].records.size()) break;
            idx[b] = 0;
            if (b == 0) {
                if (!best) {
                    if (!constraint.active) throw NoFeasibleModelError("brute force found no model unconstrained");
                    throw NoFeasibleModelError("no architecture satisfies " +
                                               std::string(cost_metric_name(constraint.metric)) +
                                               " <= " + std::to_string(constraint.bound));
                }
                best->visited = visited;
                return *best;
            }
        }
    }
}

// One search per bound, ascending; infeasible bounds yield empty slots.
inline std::vector<std::pair<int64_t, std::optional<SearchResult>>> pareto_sweep(
    const SupernetConfig& cfg, const std::vector<PathRanking>& rankings, const CostTable& table, CostMetric metric,
    std::vector<int64_t> bounds) {
    std::sort(bounds.begin(), bounds.end());
    std::vector<std::pair<int64_t, std::optional<SearchResult>>> out;
    for (int64_t bound : bounds) {
        Constraint c{metric, bound, true};
        try {
            out.emplace_back(bound, traversal_search(cfg, rankings, table, c));
        } catch (const NoFeasibleModelError&) {
            out.emplace_back(bound, std::nullopt);
        }
    }
    return out;
}

}  // namespace bnas
