#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include "polygen/core.hpp"

namespace polygen {

// Linear ramp of the hard-negative batch share: epoch e of E maps to
// p_start + (p_end - p_start) * e / (E - 1), and a one-epoch schedule sits at
// p_end directly.
struct CurriculumSchedule {
    double p_start = 0.0;
    double p_end = 0.5;
    std::size_t epochs = 40;
};

double schedule_p(const CurriculumSchedule& sched, std::size_t epoch);

// FIFO of deferred hard-negative ids. An id is never queued twice.
class LeftoverQueue {
public:
    bool contains(const std::string& id) const { return present_.count(id) != 0; }

    bool push(const std::string& id) {
        if (!present_.insert(id).second) return false;
        fifo_.push_back(id);
        return true;
    }

    std::optional<std::string> pop() {
        if (fifo_.empty()) return std::nullopt;
        std::string id = std::move(fifo_.front());
        fifo_.pop_front();
        present_.erase(id);
        return id;
    }

    std::size_t size() const { return fifo_.size(); }
    const std::deque<std::string>& items() const { return fifo_; }

private:
    std::deque<std::string> fifo_;
    std::unordered_set<std::string> present_;
};

struct BatchPlan {
    std::size_t epoch = 0;
    std::size_t step = 0;
    std::vector<std::string> positive_ids;
    std::vector<std::string> hn_ids;
};

// Plans one epoch. Every positive appears exactly once, in a seeded shuffle
// order derived from (seed, epoch). Each full batch reserves round(p*B)
// hard-negative slots, filled from the queue first (FIFO) and then by
// partnering the batch's own positives; a positive whose partner was not
// included defers it to the queue. Within one epoch an id is served at most
// once, so a positive arriving after its partner was already consumed defers
// nothing. The trailing partial batch keeps the full-batch hn:positive ratio
// rounded down. When both queue and eligible partners run dry a batch may
// carry fewer hard negatives than reserved.
std::vector<BatchPlan> plan_epoch(const std::vector<PairedSample>& dataset,
                                  const CurriculumSchedule& sched, std::size_t epoch,
                                  std::size_t batch_size, std::uint64_t seed,
                                  LeftoverQueue& queue);

double realized_hn_fraction(const std::vector<BatchPlan>& plans);

struct UtilizationReport {
    std::map<std::string, std::size_t> positive_counts;
    std::map<std::string, std::size_t> hn_counts;
    std::size_t end_queue_depth = 0;
};

UtilizationReport utilization_report(const std::vector<BatchPlan>& plans,
                                     const std::vector<PairedSample>& dataset,
                                     const LeftoverQueue& queue);

}  // namespace polygen
