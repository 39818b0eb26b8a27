#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "dmvcl/dmv.hpp"
#include "dmvcl/errors.hpp"
#include "dmvcl/mlp.hpp"
#include "dmvcl/motion.hpp"

namespace dmvcl {

/// A candidate landmark agent, known before selection only by its id
/// and advertised trace(P^j-) metadata.
struct Candidate {
    int agent_id = -1;
    double trace_pj = 0.0;
};

struct CandidateSet {
    std::vector<Candidate> candidates;
    int budget = 1;  // q, >= 1
};

/// Per-step message accounting. A belief costs 3 + 9 scalars.
struct CommsLedger {
    std::size_t scalars_sent = 0;
    std::size_t beliefs_sent = 0;

    std::size_t bytes_equivalent() const {
        return scalars_sent + beliefs_sent * 12;
    }
};

struct ScheduleResult {
    std::vector<int> selected;         // in selection order, length <= q
    Belief updated;
    std::vector<double> predicted;     // surrogate value per selection
    std::vector<double> trace_before;  // trace(P-) entering each selection
    std::vector<double> trace_after;   // trace(P+) after each selection
    CommsLedger ledger;
};

using BeliefProvider = std::function<Belief(int agent_id)>;
using MeasurementProvider = std::function<RelativeMeasurement(int agent_id)>;
/// Merit proxy: predicted trace of the updated covariance for one
/// candidate, from local data plus the candidate's scalar metadata.
using SurrogateFn = std::function<double(
    const Belief& bel_i, const Eigen::Matrix2d& r, const Candidate& cand)>;

/// Greedy selection with a surrogate merit: each round scores every
/// remaining candidate, picks the argmin predicted trace (argmax when
/// select_max is set), fetches that candidate's belief and measurement,
/// and applies one DMV update. Ties go to the lowest agent id.
/// Communication: all metadata scalars once, one belief per selection.
inline ScheduleResult schedule_with_surrogate(
    const Belief& bel_i, const Eigen::Matrix2d& r, const CandidateSet& set,
    const SurrogateFn& surrogate, const BeliefProvider& belief_provider,
    const MeasurementProvider& measurement_provider, bool select_max = false) {
    if (set.budget < 1) {
        throw ConfigError("schedule_with_surrogate: budget must be >= 1");
    }
    ScheduleResult result;
    result.updated = bel_i;
    if (set.candidates.empty()) {
        return result;
    }

    std::vector<Candidate> remaining = set.candidates;
    std::sort(remaining.begin(), remaining.end(),
              [](const Candidate& a, const Candidate& b) {
                  return a.agent_id < b.agent_id;
              });
    result.ledger.scalars_sent += remaining.size();

    const int rounds = std::min<int>(set.budget,
                                     static_cast<int>(remaining.size()));
    for (int round = 0; round < rounds; ++round) {
        std::size_t best = 0;
        double best_score =
            surrogate(result.updated, r, remaining[0]);
        for (std::size_t k = 1; k < remaining.size(); ++k) {
            const double score = surrogate(result.updated, r, remaining[k]);
            const bool better = select_max ? score > best_score
                                           : score < best_score;
            if (better) {
                best = k;
                best_score = score;
            }
        }
        const int chosen = remaining[best].agent_id;
        result.trace_before.push_back(result.updated.cov.trace());
        try {
            const Belief bel_j = belief_provider(chosen);
            result.ledger.beliefs_sent += 1;
            const RelativeMeasurement z = measurement_provider(chosen);
            result.updated = dmv_update(result.updated, bel_j, z);
        } catch (const std::runtime_error& e) {
            throw NumericalError(
                "schedule_with_surrogate: candidate " +
                std::to_string(chosen) + " failed after " +
                std::to_string(result.selected.size()) + " selections: " +
                e.what());
        }
        result.selected.push_back(chosen);
        result.predicted.push_back(best_score);
        result.trace_after.push_back(result.updated.cov.trace());
        remaining.erase(remaining.begin() +
                        static_cast<std::ptrdiff_t>(best));
    }
    return result;
}

/// Algorithm-1 scheduler: the surrogate is the trained trace-prediction
/// network.
inline ScheduleResult schedule_dnn(const Belief& bel_i,
                                   const Eigen::Matrix2d& r,
                                   const CandidateSet& set,
                                   const MlpModel& model,
                                   const BeliefProvider& belief_provider,
                                   const MeasurementProvider& measurement_provider,
                                   bool select_max = false) {
    return schedule_with_surrogate(
        bel_i, r, set,
        [&model](const Belief& bel, const Eigen::Matrix2d& meas_cov,
                 const Candidate& cand) {
            return predict_trace(model, bel, meas_cov, cand.trace_pj);
        },
        belief_provider, measurement_provider, select_max);
}

/// A candidate with its full belief and measurement already in hand
/// (the high-communication exact-greedy baseline).
struct GreedyCandidate {
    int agent_id = -1;
    Belief belief;
    RelativeMeasurement z;
};

/// Exact sequential greedy: each round evaluates trace(P+) via a full
/// DMV update for every remaining candidate and applies the minimizer.
/// All m beliefs are communicated up front.
inline ScheduleResult schedule_greedy_exact(
    const Belief& bel_i, std::vector<GreedyCandidate> candidates, int q) {
    if (q < 1) {
        throw ConfigError("schedule_greedy_exact: budget must be >= 1");
    }
    ScheduleResult result;
    result.updated = bel_i;
    if (candidates.empty()) {
        return result;
    }
    std::sort(candidates.begin(), candidates.end(),
              [](const GreedyCandidate& a, const GreedyCandidate& b) {
                  return a.agent_id < b.agent_id;
              });
    result.ledger.beliefs_sent += candidates.size();

    const int rounds = std::min<int>(q, static_cast<int>(candidates.size()));
    for (int round = 0; round < rounds; ++round) {
        std::size_t best = 0;
        double best_trace = 0.0;
        Belief best_updated;
        bool have_best = false;
        for (std::size_t k = 0; k < candidates.size(); ++k) {
            try {
                const Belief updated = dmv_update(
                    result.updated, candidates[k].belief, candidates[k].z);
                const double tr = updated.cov.trace();
                if (!have_best || tr < best_trace) {
                    best = k;
                    best_trace = tr;
                    best_updated = updated;
                    have_best = true;
                }
            } catch (const NumericalError&) {
                // Unusable candidate this round; others may still work.
            }
        }
        if (!have_best) {
            throw NumericalError(
                "schedule_greedy_exact: no candidate evaluable at round " +
                std::to_string(round));
        }
        result.updated = best_updated;
        result.selected.push_back(candidates[best].agent_id);
        candidates.erase(candidates.begin() +
                         static_cast<std::ptrdiff_t>(best));
    }
    return result;
}

/// Uniform sample of q candidate ids without replacement, seeded.
inline std::vector<int> schedule_random(const std::vector<int>& candidate_ids,
                                        int q, std::uint64_t seed) {
    if (q < 1) {
        throw ConfigError("schedule_random: budget must be >= 1");
    }
    std::vector<int> pool = candidate_ids;
    std::mt19937_64 rng(seed);
    std::shuffle(pool.begin(), pool.end(), rng);
    if (static_cast<std::size_t>(q) < pool.size()) {
        pool.resize(static_cast<std::size_t>(q));
    }
    return pool;
}

struct LedgerReport {
    bool counts_match = false;
    double cost_ratio = 0.0;  // dnn bytes-equivalent / sga bytes-equivalent
    std::string message;
};

/// Checks both ledgers against the expected per-step counts: the
/// surrogate scheduler sends m scalars + q beliefs, exact greedy sends
/// m beliefs.
inline LedgerReport ledger_compare(const CommsLedger& dnn,
                                   const CommsLedger& sga, std::size_t m,
                                   std::size_t q) {
    LedgerReport report;
    report.counts_match = dnn.scalars_sent == m && dnn.beliefs_sent == q &&
                          sga.beliefs_sent == m && sga.scalars_sent == 0;
    if (sga.bytes_equivalent() > 0) {
        report.cost_ratio = static_cast<double>(dnn.bytes_equivalent()) /
                            static_cast<double>(sga.bytes_equivalent());
    }
    report.message =
        "dnn: " + std::to_string(dnn.scalars_sent) + " scalars + " +
        std::to_string(dnn.beliefs_sent) + " beliefs (" +
        std::to_string(dnn.bytes_equivalent()) + "), sga: " +
        std::to_string(sga.beliefs_sent) + " beliefs (" +
        std::to_string(sga.bytes_equivalent()) + ")";
    if (!report.counts_match) {
        report.message += " [count mismatch: expected m=" +
                          std::to_string(m) + ", q=" + std::to_string(q) + "]";
    }
    return report;
}

}  // namespace dmvcl
